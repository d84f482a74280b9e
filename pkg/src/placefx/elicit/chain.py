"""Chain execution: per-round prompting, retries, caching, consensus.

Each round runs prompts 1 and 2, injects their outputs as variables into
prompts 3 and 4, and records the round's (canopy, poverty) numeric pair.
Rejected replies are re-asked with a one-line corrective reminder up to
``max_retries`` times; an exhausted round contributes null.  The tile's
consensus is the arithmetic mean over non-null rounds when at least
``quorum`` rounds are usable, else null.  Every request/reply lands in
an append-only JSONL cache keyed by (image_ref, prompt_id, round), so a
warm re-run performs zero endpoint calls and reproduces the identical
result.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from ..ingest import TileRecord
from . import schema
from .prompts import render_prompt

log = logging.getLogger(__name__)

RETRY_REMINDER = (
    "Reminder: your previous reply was rejected ({reason}). "
    "Return exactly one valid JSON object matching the schema, with the "
    "numeric value strictly inside the chosen band and rounded to two decimals."
)


class EndpointUnavailable(RuntimeError):
    pass


class ValidationFailedAllRetries(RuntimeError):
    def __init__(self, prompt_id: int, round_index: int, last_error: Exception):
        self.prompt_id = prompt_id
        self.round_index = round_index
        self.last_error = last_error
        super().__init__(
            f"prompt {prompt_id} round {round_index}: all retries rejected "
            f"({last_error})"
        )


@dataclass(frozen=True)
class PromptChainConfig:
    rounds: int = 5
    quorum: int = 3
    endpoint_url: str = ""
    model_name: str = "vision-default"
    temperature: float = 1.0  # decoding settings are a free choice, surfaced here
    timeout_s: float = 60.0
    max_retries: int = 2
    cache_dir: str | None = None
    max_in_flight: int = 4
    credential_env: str = "PLACEFX_ENDPOINT_TOKEN"

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.quorum < 1:
            raise ValueError("quorum must be >= 1")


@dataclass(frozen=True)
class EndpointRequest:
    """One model call; prompt_id and round_index key caching and replay."""

    model_name: str
    image_ref: str
    prompt_text: str
    temperature: float
    prompt_id: int
    round_index: int

    def request_hash(self) -> str:
        payload = json.dumps(
            {
                "model_name": self.model_name,
                "image_ref": self.image_ref,
                "prompt_text": self.prompt_text,
                "temperature": self.temperature,
                "prompt_id": self.prompt_id,
                "round_index": self.round_index,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class EndpointClient(Protocol):
    def complete(self, request: EndpointRequest) -> str: ...


class HttpEndpointClient:
    """Minimal HTTP POST client for a JSON-reply vision endpoint.

    The credential is read from the environment variable named in the
    config (never from the config file itself).
    """

    def __init__(self, cfg: PromptChainConfig):
        self.cfg = cfg
        if not cfg.endpoint_url:
            raise ValueError("endpoint_url is required for the HTTP client")

    def complete(self, request: EndpointRequest) -> str:
        import requests

        headers = {}
        token = os.environ.get(self.cfg.credential_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(
                self.cfg.endpoint_url,
                json={
                    "model_name": request.model_name,
                    "image_ref": request.image_ref,
                    "prompt": request.prompt_text,
                    "temperature": request.temperature,
                },
                headers=headers,
                timeout=self.cfg.timeout_s,
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise EndpointUnavailable(str(exc)) from exc
        return resp.text


class PromptCache:
    """Append-only JSONL cache of every request/reply with its verdict.

    Verdicts: "ok" (accepted), "rejected" (re-asked), "failed" (round
    exhausted, recorded null).  Lookup returns the terminal record for a
    (image_ref, prompt_id, round) key so warm runs never call out.
    """

    def __init__(self, cache_dir: str | Path):
        self.path = Path(cache_dir) / "prompt_cache.jsonl"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._terminal: dict[tuple[str, int, int], dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    if rec.get("verdict") in ("ok", "failed"):
                        key = (rec["image_ref"], rec["prompt_id"], rec["round_index"])
                        self._terminal[key] = rec

    def lookup(self, image_ref: str, prompt_id: int, round_index: int) -> dict | None:
        return self._terminal.get((image_ref, prompt_id, round_index))

    def record(self, request: EndpointRequest, reply: str, verdict: str) -> None:
        rec = {
            "image_ref": request.image_ref,
            "prompt_id": request.prompt_id,
            "round_index": request.round_index,
            "request_hash": request.request_hash(),
            "reply": reply,
            "verdict": verdict,
            "timestamp": time.time(),
        }
        line = json.dumps(rec, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            if verdict in ("ok", "failed"):
                key = (request.image_ref, request.prompt_id, request.round_index)
                self._terminal[key] = rec


@dataclass
class ElicitationResult:
    pano_id: str
    tile_heading: int
    round_values_poverty: list[float | None]
    round_values_canopy: list[float | None]
    consensus_poverty: float | None
    consensus_canopy: float | None
    n_valid_rounds_poverty: int
    n_valid_rounds_canopy: int
    endpoint_calls: int = field(default=0, compare=False)


def consensus(values: list[float | None], quorum: int) -> tuple[float | None, int]:
    usable = [v for v in values if v is not None]
    if len(usable) < quorum:
        return None, len(usable)
    return sum(usable) / len(usable), len(usable)


def _ask_validated(
    endpoint: EndpointClient,
    cfg: PromptChainConfig,
    image_ref: str,
    prompt_id: int,
    round_index: int,
    variables: dict | None,
    context: dict | None,
    cache: PromptCache | None,
    calls: list[int],
):
    """One validated reply for (prompt, round), with retries and caching."""
    if cache is not None:
        hit = cache.lookup(image_ref, prompt_id, round_index)
        if hit is not None:
            if hit["verdict"] == "failed":
                raise ValidationFailedAllRetries(
                    prompt_id, round_index, ValueError("cached as failed")
                )
            return schema.validate_response(prompt_id, hit["reply"], context)

    prompt_text = render_prompt(prompt_id, variables)
    last_error: Exception = ValueError("no attempt made")
    for attempt in range(cfg.max_retries + 1):
        request = EndpointRequest(
            model_name=cfg.model_name,
            image_ref=image_ref,
            prompt_text=prompt_text,
            temperature=cfg.temperature,
            prompt_id=prompt_id,
            round_index=round_index,
        )
        transport_error: Exception | None = None
        for _ in range(cfg.max_retries + 1):
            try:
                reply = endpoint.complete(request)
                calls[0] += 1
                transport_error = None
                break
            except EndpointUnavailable as exc:
                transport_error = exc
        if transport_error is not None:
            raise EndpointUnavailable(
                f"endpoint unavailable after {cfg.max_retries + 1} attempts: "
                f"{transport_error}"
            )
        try:
            parsed = schema.validate_response(prompt_id, reply, context)
        except schema.ResponseValidationError as exc:
            last_error = exc
            verdict = "rejected" if attempt < cfg.max_retries else "failed"
            if cache is not None:
                cache.record(request, reply, verdict)
            prompt_text = (
                render_prompt(prompt_id, variables)
                + "\n"
                + RETRY_REMINDER.format(reason=exc)
            )
            continue
        if cache is not None:
            cache.record(request, reply, "ok")
        return parsed
    raise ValidationFailedAllRetries(prompt_id, round_index, last_error)


def run_chain(
    pano_id: str,
    tile: TileRecord,
    cfg: PromptChainConfig,
    endpoint: EndpointClient,
    cache: PromptCache | None = None,
) -> ElicitationResult:
    """Run the four-prompt chain for ``cfg.rounds`` rounds on one tile.

    Per round, prompts 1 and 2 run first and their outputs are injected
    verbatim as variables into prompts 3 and 4.  A prompt that fails all
    retries nulls out only the values that depend on it.  An "unknown"
    band is epistemic and also recorded as null, never as zero.
    """
    if not tile.valid:
        raise ValueError(f"tile {pano_id}/{tile.heading} is marked invalid")
    calls = [0]
    poverty_rounds: list[float | None] = []
    canopy_rounds: list[float | None] = []
    for round_index in range(cfg.rounds):
        p1 = p2 = None
        try:
            p1 = _ask_validated(
                endpoint, cfg, tile.image_ref, 1, round_index, None, None, cache, calls
            )
        except ValidationFailedAllRetries as exc:
            log.warning("%s", exc)
        try:
            p2 = _ask_validated(
                endpoint, cfg, tile.image_ref, 2, round_index, None, None, cache, calls
            )
        except ValidationFailedAllRetries as exc:
            log.warning("%s", exc)

        canopy_value = None
        if p2 is not None:
            variables = {
                "canopy_indicators": list(p2.canopy_indicators),
                "n_canopy_indicators": p2.n_canopy_indicators,
            }
            try:
                est = _ask_validated(
                    endpoint, cfg, tile.image_ref, 3, round_index,
                    variables, variables, cache, calls,
                )
                canopy_value = est.value
            except ValidationFailedAllRetries as exc:
                log.warning("%s", exc)

        poverty_value = None
        if p1 is not None and p2 is not None:
            variables = {
                "structure_type": p1.structure_type,
                "facade_indicators": list(p1.facade_indicators),
                "n_facade_indicators": p1.n_facade_indicators,
                "env_indicators": list(p2.env_indicators),
                "n_env_indicators": p2.n_env_indicators,
            }
            context = {
                "n_facade_indicators": p1.n_facade_indicators,
                "n_env_indicators": p2.n_env_indicators,
            }
            try:
                est = _ask_validated(
                    endpoint, cfg, tile.image_ref, 4, round_index,
                    variables, context, cache, calls,
                )
                poverty_value = est.value
            except ValidationFailedAllRetries as exc:
                log.warning("%s", exc)

        canopy_rounds.append(canopy_value)
        poverty_rounds.append(poverty_value)

    cons_pov, n_pov = consensus(poverty_rounds, cfg.quorum)
    cons_can, n_can = consensus(canopy_rounds, cfg.quorum)
    return ElicitationResult(
        pano_id=pano_id,
        tile_heading=tile.heading,
        round_values_poverty=poverty_rounds,
        round_values_canopy=canopy_rounds,
        consensus_poverty=cons_pov,
        consensus_canopy=cons_can,
        n_valid_rounds_poverty=n_pov,
        n_valid_rounds_canopy=n_can,
        endpoint_calls=calls[0],
    )
