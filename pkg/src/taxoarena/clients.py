"""External-service clients: pairwise image judge and top-1 image retrieval.

Every network call goes through an injectable transport so tests replay
canned responses and the judge pipeline can be re-run offline from recorded
transcripts. Live transports read their API key from the environment
variable named in the config and share a token-bucket rate limiter.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from typing import IO, Callable, Iterable, Optional
from urllib.parse import quote

from . import errors
from .arena import Battle, Outcome, Verdict

Transport = Callable[[dict], str]

_VERDICT_RE = re.compile(r"\[\[(A|B|C|D)\]\]")
_VERDICT_MAP = {"A": Outcome.WIN_A, "B": Outcome.WIN_B,
                "C": Outcome.TIE, "D": Outcome.BOTH_BAD}

MEDIASEARCH_URL = ("https://commons.wikimedia.org/w/index.php"
                   "?search={query}&title=Special:MediaSearch&go=Go&type=image")

_IMAGE_URL_RE = re.compile(
    r"https://upload\.wikimedia\.org/[^\s\"'<>\\]+?\.(?:jpg|jpeg|png|gif|svg|tiff?)",
    re.IGNORECASE,
)

DEFINITION_PROMPT = (
    "Write a definition for the word/phrase in one sentence.\n"
    "\n"
    "Example:\n"
    "Word: caddle\n"
    "Definition: act as a caddie and carry clubs for a player\n"
    "\n"
    "Word: {word}\n"
    "Definition:"
)


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o-mini"
    api_key_env: str = "JUDGE_API_KEY"
    max_retries: int = 2
    timeout_s: float = 60.0
    temperature: float = 0.0
    requests_per_minute: int = 60

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


@dataclass
class RetrievalResult:
    lemma: str
    url: Optional[str]
    already_seen: bool = False
    fetched: Optional[bytes] = None


def _judge_template() -> str:
    return resources.files("taxoarena").joinpath(
        "templates/judge_prompt.txt").read_text(encoding="utf-8")


def render_judge_prompt(concept: str, definition: Optional[str],
                        image_a_ref: str, image_b_ref: str,
                        config: JudgeConfig = JudgeConfig()) -> dict:
    """Chat-completion payload with both images; byte-stable for fixed inputs."""
    if not concept:
        raise errors.EmptyConcept("judge prompt needs a concept")
    text = _judge_template().format(
        CONCEPT=concept,
        DEFINITION_CLAUSE=" and its definition" if definition else "",
        DEFINITION_BLOCK=f"\n\n[Definition]\n{definition}" if definition else "",
    )
    return {
        "model": config.model,
        "temperature": config.temperature,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": text},
                {"type": "image_url", "image_url": {"url": image_a_ref}},
                {"type": "image_url", "image_url": {"url": image_b_ref}},
            ],
        }],
    }


def payload_bytes(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def request_hash(payload: dict) -> str:
    return hashlib.sha256(payload_bytes(payload)).hexdigest()


def parse_verdict(text: str) -> Optional[Outcome]:
    """Trailing verdict token wins; None when the response has no token."""
    matches = _VERDICT_RE.findall(text)
    return _VERDICT_MAP[matches[-1]] if matches else None


def _rfc3339_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def judge_pair(battle: Battle, images: tuple[str, str], config: JudgeConfig,
               transport: Transport, definition: Optional[str] = None,
               transcript_sink: Optional[Callable[[dict], None]] = None,
               ) -> tuple[Verdict, str]:
    """Ask the judge for a verdict on one battle; returns (verdict, transcript).

    Transport failures and unparseable responses are retried up to
    config.max_retries times each; the verdict always comes from a token in
    the returned transcript, never from a default.
    """
    payload = render_judge_prompt(battle.concept_id, definition,
                                  images[0], images[1], config)
    last_text = ""
    last_error: Optional[Exception] = None
    for _ in range(config.max_retries + 1):
        try:
            last_text = transport(payload)
        except (errors.TransportError, errors.RateLimited) as exc:
            last_error = exc
            continue
        outcome = parse_verdict(last_text)
        if outcome is None:
            last_error = None
            continue
        verdict = Verdict(battle_id=battle.battle_id, judge_id=config.model,
                          outcome=outcome, ts=_rfc3339_now())
        if transcript_sink is not None:
            transcript_sink({
                "battle_id": battle.battle_id,
                "request_hash": request_hash(payload),
                "response_text": last_text,
                "verdict": outcome.value,
            })
        return verdict, last_text
    if last_error is not None:
        raise last_error
    raise errors.ParseError(last_text)


class TokenBucket:
    """Blocking requests-per-minute limiter shared by live transports."""

    def __init__(self, per_minute: int, clock=time.monotonic, sleep=time.sleep):
        self.capacity = max(1, per_minute)
        self.tokens = float(self.capacity)
        self.rate = self.capacity / 60.0
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


def http_transport(config: JudgeConfig,
                   limiter: Optional[TokenBucket] = None) -> Transport:
    """Live JSON-over-HTTPS transport; typed errors, honors the timeout."""
    import os

    import httpx

    bucket = limiter or TokenBucket(config.requests_per_minute)
    api_key = os.environ.get(config.api_key_env, "")

    def send(payload: dict) -> str:
        bucket.acquire()
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = httpx.post(config.endpoint, content=payload_bytes(payload),
                              headers=headers, timeout=config.timeout_s)
        except httpx.HTTPError as exc:
            raise errors.TransportError(str(exc)) from exc
        if resp.status_code == 429:
            raise errors.RateLimited("judge endpoint rate limited")
        if resp.status_code >= 400:
            raise errors.TransportError(f"judge endpoint returned {resp.status_code}")
        try:
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise errors.TransportError(f"malformed judge response: {exc}") from exc

    return send


def replay_transport(transcripts: Iterable[dict]) -> Transport:
    """Serve recorded responses keyed by request hash; miss = transport error."""
    recorded = {t["request_hash"]: t["response_text"] for t in transcripts}

    def send(payload: dict) -> str:
        key = request_hash(payload)
        if key not in recorded:
            raise errors.TransportError(f"no recorded response for request {key[:12]}")
        return recorded[key]

    return send


def load_transcripts(source: IO[str]) -> list[dict]:
    out = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise errors.MalformedRecord(lineno, f"invalid JSON: {exc}") from exc
    return out


def transcript_writer(sink: IO[str]) -> Callable[[dict], None]:
    def write(record: dict) -> None:
        sink.write(json.dumps(record, sort_keys=True) + "\n")

    return write


UrlTransport = Callable[[str], str]


def retrieve_top1(lemma: str, seen: set[str], transport: UrlTransport) -> RetrievalResult:
    """Top-1 Commons MediaSearch hit for a lemma, with duplicate flagging."""
    if not lemma:
        raise errors.EmptyWord("retrieval lemma must be nonempty")
    url = MEDIASEARCH_URL.format(query=quote(lemma))
    body = transport(url)
    match = _IMAGE_URL_RE.search(body)
    if match is None:
        raise errors.NoResult(lemma)
    image_url = match.group(0)
    already = image_url in seen
    seen.add(image_url)
    return RetrievalResult(lemma=lemma, url=image_url, already_seen=already)


def http_url_transport(timeout_s: float = 30.0,
                       limiter: Optional[TokenBucket] = None) -> UrlTransport:
    import httpx

    bucket = limiter or TokenBucket(60)

    def fetch(url: str) -> str:
        bucket.acquire()
        try:
            resp = httpx.get(url, timeout=timeout_s, follow_redirects=True)
        except httpx.HTTPError as exc:
            raise errors.TransportError(str(exc)) from exc
        if resp.status_code >= 400:
            raise errors.TransportError(f"retrieval returned {resp.status_code}")
        return resp.text

    return fetch


def render_definition_prompt(word: str) -> str:
    """Few-shot single-sentence definition prompt for a new word."""
    if not word:
        raise errors.EmptyWord("definition prompt needs a word")
    return DEFINITION_PROMPT.format(word=word)
