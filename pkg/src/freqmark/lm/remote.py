"""Client for OpenAI-compatible ``/v1/completions`` endpoints.

Each call asks for a single token with ``logprobs=5`` and reads the
``top_logprobs`` of that position. Token ids are interned locally in order of
first appearance, so they are stable within one process only.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
from typing import Sequence

import httpx

from ..errors import BackendUnavailable, ContextTooLong
from .base import K_MAX, LanguageModel, RankedCandidates, Token

log = logging.getLogger(__name__)

API_KEY_ENV = "FREQMARK_API_KEY"
API_BASE_ENV = "FREQMARK_API_BASE"
DEFAULT_BASE = "https://api.openai.com"
EOS_TEXT = "<|endoftext|>"

_PIECE = re.compile(r"\s*\S+")
_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


class RemoteModel(LanguageModel):
    def __init__(
        self,
        model: str,
        base_url: str | None = None,
        api_key: str | None = None,
        *,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        top_p: float = 0.95,
        transport: httpx.BaseTransport | None = None,
        cache_size: int = 100_000,
    ):
        api_key = api_key or os.environ.get(API_KEY_ENV)
        if not api_key:
            raise BackendUnavailable(f"remote backend needs an API key in ${API_KEY_ENV}")
        self.model = model
        self.base_url = (base_url or os.environ.get(API_BASE_ENV) or DEFAULT_BASE).rstrip("/")
        self.max_retries = max_retries
        self.backoff = backoff
        self.top_p = top_p
        self.k_max = K_MAX
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )
        self._lock = threading.Lock()
        self._ids: dict[str, int] = {}
        self._cache: dict[str, tuple[tuple[Token, float], ...]] = {}
        self._cache_size = cache_size
        self.eos_id = self._intern(EOS_TEXT).id

    def _intern(self, text: str) -> Token:
        with self._lock:
            i = self._ids.get(text)
            if i is None:
                i = self._ids[text] = len(self._ids)
        return Token(i, text)

    def token_from_text(self, text: str) -> Token:
        return self._intern(text)

    def tokenize(self, text: str) -> list[Token]:
        # Approximation: the provider's tokenizer is not available locally.
        return [self._intern(p) for p in _PIECE.findall(text)]

    def detokenize(self, tokens: Sequence[Token]) -> str:
        return "".join(t.text for t in tokens)

    def _request(self, prompt: str) -> dict:
        body = {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": 1,
            "logprobs": K_MAX,
            "temperature": 0.0,
            "top_p": self.top_p,
        }
        url = f"{self.base_url}/v1/completions"
        last = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=body)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.warning("completion request failed (attempt %d): %s", attempt + 1, last)
                continue
            if resp.status_code == 200:
                return resp.json()
            text = resp.text
            if resp.status_code in (401, 403):
                raise BackendUnavailable(f"authentication rejected ({resp.status_code})")
            if resp.status_code == 400 and ("context" in text.lower() and "length" in text.lower()):
                raise ContextTooLong(text[:200])
            if resp.status_code in _RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                log.warning("completion request failed (attempt %d): %s", attempt + 1, last)
                continue
            raise BackendUnavailable(f"HTTP {resp.status_code}: {text[:200]}")
        raise BackendUnavailable(f"gave up after {self.max_retries + 1} attempts: {last}")

    def _fetch(self, prompt: str) -> tuple[tuple[Token, float], ...]:
        key = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        data = self._request(prompt)
        try:
            top = data["choices"][0]["logprobs"]["top_logprobs"][0]
        except (KeyError, IndexError, TypeError):
            raise BackendUnavailable("response carries no top_logprobs") from None
        pairs = [(self._intern(text), float(lp)) for text, lp in top.items()]
        pairs.sort(key=lambda p: (-p[1], p[0].id))
        result = tuple(pairs)
        with self._lock:
            if len(self._cache) < self._cache_size:
                self._cache[key] = result
        return result

    def next_candidates(self, context: Sequence[Token], k: int) -> RankedCandidates:
        self._check_k(k)
        pairs = self._fetch(self.detokenize(context))
        return RankedCandidates(len(context), pairs[:k])

    def close(self) -> None:
        self._client.close()
