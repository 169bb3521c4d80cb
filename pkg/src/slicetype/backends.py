"""Generation backends: an OpenAI-style chat-completions client and a file-backed mock."""
from __future__ import annotations

import hashlib
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

ENV_API_BASE = "SLICETYPE_API_BASE"
ENV_API_KEY = "SLICETYPE_API_KEY"
ENV_MODEL = "SLICETYPE_MODEL"


class BackendError(RuntimeError):
    pass


class BackendTransportError(BackendError):
    """Network or server failure; worth retrying."""


class BackendResponseError(BackendError):
    """The backend answered with something unusable."""


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.2
    top_p: float = 0.3
    n_samples: int = 20

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


class Backend(Protocol):
    def complete(self, prompt: str, config: SamplingConfig, index: int) -> str:
        ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class HTTPBackend:
    def __init__(self, base_url: str, model: str, api_key: Optional[str] = None, timeout: float = 60.0):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    @classmethod
    def from_env(cls, base_url: Optional[str] = None, model: Optional[str] = None) -> "HTTPBackend":
        base = base_url or os.environ.get(ENV_API_BASE)
        model = model or os.environ.get(ENV_MODEL)
        if not base or not model:
            raise BackendError(f"set {ENV_API_BASE} and {ENV_MODEL} to use the http backend")
        return cls(base, model, os.environ.get(ENV_API_KEY))

    def complete(self, prompt: str, config: SamplingConfig, index: int) -> str:
        body = json.dumps({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": config.temperature,
            "top_p": config.top_p,
            "n": 1,
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code >= 500 or exc.code == 429:
                raise BackendTransportError(f"HTTP {exc.code} from {self.url}") from exc
            raise BackendResponseError(f"HTTP {exc.code} from {self.url}") from exc
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise BackendTransportError(str(exc)) from exc
        try:
            data = json.loads(payload)
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendResponseError("response has no choices[0].message.content") from exc
        if not isinstance(content, str):
            raise BackendResponseError("completion content is not text")
        return content


class MockBackend:
    """Canned completions keyed by the SHA-256 of the prompt.

    The mock file is a JSON object mapping prompt hashes to a list of
    completions; sample ``i`` returns entry ``i`` modulo the list length.  A
    ``"*"`` entry answers any prompt without its own key.  Read-only after
    construction, so concurrent use is safe.
    """

    def __init__(self, responses: dict[str, list[str]]):
        self.responses = {k: list(v) for k, v in responses.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
            raise BackendError(f"{path}: mock file must map prompt hashes to lists of strings")
        return cls(data)

    def complete(self, prompt: str, config: SamplingConfig, index: int) -> str:
        canned = self.responses.get(prompt_hash(prompt)) or self.responses.get("*")
        if not canned:
            raise BackendResponseError(f"no canned completion for prompt {prompt_hash(prompt)[:12]}")
        return canned[index % len(canned)]
