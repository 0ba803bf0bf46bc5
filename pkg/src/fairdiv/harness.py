"""Provider-agnostic sampling pipeline: query, extract, parse, label, record.

The default strategy is two-stage: a free-text prompt, then a second
single-turn prompt that embeds the first exchange and asks for the chosen
allocation as JSON.  Template prompts are single-stage; refinement families
loop feedback rounds.  Every sample is appended to a sink as one JSONL line
containing the full transcript — records are never reduced to labels only.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence

from . import corpus
from .classify import LabeledResponse, FrequencyTable, aggregate
from .engine import label
from .model import (
    DISCARD,
    Instance,
    Outcome,
    ValidationError,
    format_quantity,
    validate_outcome,
)
from .prompts import (
    FEEDBACK_TEXTS,
    EXTRACTION_HEADER,
    PromptFamily,
    _normalize_notion,
    render_extraction_prompt,
    render_feedback_prompt,
    render_prompt,
)

SCRIPTED_ENDPOINT = "scripted:"


@dataclass(frozen=True)
class ProviderConfig:
    """How to reach a chat-completion endpoint, and how hard to push it."""

    endpoint: str
    model: str = ""
    temperature: float = 1.0
    samples: int = 100
    concurrency: int = 1
    transport_retries: int = 3
    backoff_seconds: float = 1.0
    env_key_name: Optional[str] = None
    script: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValidationError("temperature must be nonnegative")
        if self.samples < 1:
            raise ValidationError("samples must be at least 1")
        if self.concurrency < 1:
            raise ValidationError("concurrency must be at least 1")

    @property
    def is_scripted(self) -> bool:
        return self.endpoint.startswith(SCRIPTED_ENDPOINT)

    def snapshot(self) -> dict:
        """Config as stored in run records: no credentials, no script bodies."""
        return {
            "endpoint": self.endpoint,
            "model": self.model,
            "temperature": self.temperature,
            "samples": self.samples,
            "concurrency": self.concurrency,
            "transport_retries": self.transport_retries,
            "backoff_seconds": self.backoff_seconds,
            "env_key_name": self.env_key_name,
            "script_length": len(self.script),
        }


class Provider(Protocol):
    def complete(self, messages: list[dict]) -> str:  # pragma: no cover
        ...


_EXTRACTION_MARKERS = (
    "Previously, I asked you the following question:",
    EXTRACTION_HEADER,
)
_RESPONSE_OPEN = 'And this was your response\n"'
_RESPONSE_CLOSE = '"\n\nPlease present'


class ScriptedProvider:
    """Cycles through canned texts; answers extraction prompts by echo.

    An extraction prompt (recognised by containing both the quoting header
    and the JSON-format request) is answered with the response embedded in
    it, without advancing the cycle, so a canned text that is already valid
    JSON passes through the two-stage pipeline unchanged.  All other
    prompts — including feedback prompts, which quote the exchange but do
    not ask for JSON — consume the next canned text.
    """

    def __init__(self, script: Sequence[str]):
        if not script:
            raise ValidationError("scripted provider needs at least one text")
        self._script = tuple(script)
        self._index = 0
        self._lock = threading.Lock()

    def complete(self, messages: list[dict]) -> str:
        content = messages[-1]["content"]
        if all(marker in content for marker in _EXTRACTION_MARKERS):
            start = content.index(_RESPONSE_OPEN) + len(_RESPONSE_OPEN)
            end = content.index(_RESPONSE_CLOSE, start)
            return content[start:end]
        with self._lock:
            text = self._script[self._index % len(self._script)]
            self._index += 1
        return text


class HttpChatProvider:
    """Minimal chat-completions client over HTTP (OpenAI-style schema)."""

    def __init__(self, config: ProviderConfig):
        import httpx

        self._config = config
        headers = {}
        if config.env_key_name:
            key = os.environ.get(config.env_key_name, "")
            if not key:
                raise ValidationError(
                    f"environment variable {config.env_key_name} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(headers=headers, timeout=120.0)

    def complete(self, messages: list[dict]) -> str:
        response = self._client.post(
            self._config.endpoint,
            json={
                "model": self._config.model,
                "temperature": self._config.temperature,
                "messages": messages,
            },
        )
        response.raise_for_status()
        payload = response.json()
        return payload["choices"][0]["message"]["content"]


def make_provider(config: ProviderConfig) -> Provider:
    if config.is_scripted:
        return ScriptedProvider(config.script)
    return HttpChatProvider(config)


# --- Response parsing -------------------------------------------------------


@dataclass(frozen=True)
class ParseResult:
    outcome: Optional[Outcome]
    failure: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.outcome is not None


_TRAILING_COMMA = re.compile(r",(\s*[}\]])")
_PERSON_NUMBER = re.compile(r"^person\s+(\d+)$", re.IGNORECASE)


def _balanced_objects(text: str) -> Iterable[str]:
    """Yield every balanced {...} slice, outermost first, left to right."""
    depth = 0
    start = None
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth:
                depth -= 1
                if depth == 0 and start is not None:
                    yield text[start : i + 1]
                    start = None


def _first_json_object(text: str) -> Optional[dict]:
    for candidate in _balanced_objects(text):
        cleaned = _TRAILING_COMMA.sub(r"\1", candidate)
        try:
            data = json.loads(cleaned)
        except json.JSONDecodeError:
            continue
        if isinstance(data, dict):
            return data
    return None


def _parse_recipient(
    instance: Instance, good: str, value, role: Optional[int]
) -> Optional[int]:
    """Agent index, DISCARD, or a ValueError for unknown recipients."""
    if value is None:
        return DISCARD
    if isinstance(value, int) and not isinstance(value, bool):
        if 1 <= value <= instance.n:
            return value - 1
        raise ValueError(f"unknown recipient for {good}: {value!r}")
    if isinstance(value, str):
        name = value.strip()
        if name.lower() in ("none", ""):
            return DISCARD
        if name == "You":
            if role is None:
                raise ValueError(
                    f'recipient "You" for {good} but no decision-maker role'
                )
            return role
        match = _PERSON_NUMBER.match(name)
        if match and 1 <= int(match.group(1)) <= instance.n:
            return int(match.group(1)) - 1
    raise ValueError(f"unknown recipient for {good}: {value!r}")


def _parse_money(value) -> Fraction:
    if isinstance(value, bool):
        raise ValueError(f"unparseable money amount: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"unparseable money amount: {value!r}")
    raise ValueError(f"unparseable money amount: {value!r}")


def parse_response(
    instance: Instance, text: str, role: Optional[int] = None
) -> ParseResult:
    """Extract the first JSON object and map it to a validated outcome.

    Missing good keys mean the good was discarded; missing money keys mean
    zero.  Failures carry a reason and never raise.
    """
    if role is None:
        role = instance.decision_maker_role
    data = _first_json_object(text)
    if data is None:
        return ParseResult(None, "no JSON object found in response")

    assignment = []
    for g, good in enumerate(instance.goods):
        try:
            assignment.append(_parse_recipient(instance, good, data.get(good), role))
        except ValueError as exc:
            return ParseResult(None, str(exc))

    if instance.money > 0:
        payments = []
        for agent in instance.agents:
            raw = data.get(f"{agent} money", 0)
            try:
                payments.append(_parse_money(raw))
            except ValueError as exc:
                return ParseResult(None, str(exc))
    else:
        payments = []

    outcome = Outcome.make(assignment, payments)
    violations = validate_outcome(instance, outcome)
    if violations:
        return ParseResult(None, violations[0])
    return ParseResult(outcome)


# --- Run records ------------------------------------------------------------


@dataclass(frozen=True)
class SampleRecord:
    """One sample: the whole exchange plus its parsed, labeled outcome."""

    index: int
    transcript: tuple[dict, ...]
    outcome: Optional[Outcome]
    failure: Optional[str]
    notions: frozenset[str]
    rounds: int = 1
    note: Optional[str] = None

    def to_json_dict(self, instance: Instance) -> dict:
        if self.outcome is None:
            outcome_json = None
        else:
            outcome_json = {
                "assignment": [
                    None if a is DISCARD else a for a in self.outcome.assignment
                ],
                "payments": [format_quantity(p) for p in self.outcome.payments],
            }
        return {
            "instance_id": instance.id,
            "sample_index": self.index,
            "transcript": list(self.transcript),
            "outcome": outcome_json,
            "failure": self.failure,
            "notions": sorted(self.notions),
            "rounds": self.rounds,
            "note": self.note,
        }


def outcome_from_json_dict(data: dict) -> Outcome:
    return Outcome.make(
        [DISCARD if a is None else a for a in data["assignment"]],
        [Fraction(p) for p in data["payments"]],
    )


@dataclass(frozen=True)
class RunRecord:
    """One experiment: one instance, one family, `samples` fully-kept samples."""

    run_id: str
    instance: Instance
    family_snapshot: dict
    config_snapshot: dict
    samples: tuple[SampleRecord, ...]
    started_at: float
    finished_at: float

    @property
    def failure_count(self) -> int:
        return sum(1 for s in self.samples if s.outcome is None)

    def labeled_responses(self, source: Optional[str] = None) -> list[LabeledResponse]:
        source = source if source is not None else self.run_id
        records = []
        for sample in self.samples:
            if sample.outcome is None:
                records.append(
                    LabeledResponse.invalid_response(
                        self.instance.id, source, raw_ref=sample.failure
                    )
                )
            else:
                records.append(
                    LabeledResponse.from_outcome(
                        self.instance, sample.outcome, source
                    )
                )
        return records

    def frequency_table(self) -> FrequencyTable:
        return aggregate(self.labeled_responses())


class JsonlSink:
    """Append-only JSONL writer; appends are serialized across threads."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        line = json.dumps(record, separators=(",", ":"))
        with self._lock:
            with self.path.open("a", encoding="utf-8") as stream:
                stream.write(line + "\n")


class ListSink:
    """In-memory sink for tests."""

    def __init__(self):
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        with self._lock:
            self.records.append(record)


def _family_snapshot(family: PromptFamily) -> dict:
    snapshot = {"kind": family.kind}
    if family.notion is not None:
        snapshot["notion"] = family.notion
    if family.variant is not None:
        snapshot["variant"] = family.variant
    if family.example_instance_id is not None:
        snapshot["example_instance_id"] = family.example_instance_id
    if family.kind == "menu_selection":
        snapshot["context"] = family.context
        snapshot["options"] = len(family.options or ())
    if family.role is not None:
        snapshot["role"] = family.role
    if family.kind == "feedback_refinement":
        snapshot["max_retries"] = family.max_retries
    if family.last_line is not None:
        snapshot["last_line"] = family.last_line
    return snapshot


def family_for_instance(family: PromptFamily, instance: Instance) -> PromptFamily:
    """Resolve per-instance parameters (menu options and percentages)."""
    if family.kind != "menu_selection" or family.options:
        return family
    options = tuple(corpus.menu_options(instance.id))
    percents = family.percents
    if family.context == "human_percentages" and percents is None:
        reference = corpus.human_reference(instance.id)
        by_outcome = {e.outcome: e.percent_text for e in reference.entries}
        missing = [o for o in options if by_outcome.get(o) is None]
        if missing:
            raise ValidationError(
                f"no recorded human percentage for a menu option of {instance.id}"
            )
        percents = tuple(by_outcome[o] for o in options)
    return replace(family, options=options, percents=percents)


def effective_role(instance: Instance, family: PromptFamily) -> Optional[int]:
    if family.kind == "role_assigned":
        return family.role
    return instance.decision_maker_role


class _RetryingProvider:
    """Wraps a provider with the config's retry/backoff policy."""

    def __init__(
        self,
        provider: Provider,
        retries: int,
        backoff_seconds: float,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._provider = provider
        self._retries = retries
        self._backoff = backoff_seconds
        self._sleep = sleep

    def complete(self, messages: list[dict]) -> str:
        attempt = 0
        while True:
            try:
                return self._provider.complete(messages)
            except Exception:
                attempt += 1
                if attempt > self._retries:
                    raise
                self._sleep(self._backoff * (2 ** (attempt - 1)))


def _notion_names(instance: Instance, outcome: Outcome) -> frozenset[str]:
    return label(instance, outcome).names()


def _two_stage_sample(
    instance: Instance,
    family: PromptFamily,
    provider: Provider,
    index: int,
) -> SampleRecord:
    first = render_prompt(instance, family)
    transcript = list(first)
    role = effective_role(instance, family)
    try:
        answer = provider.complete(first)
        transcript.append({"role": "assistant", "content": answer})
        if family.kind == "template_single_stage":
            target = answer
        else:
            extraction = render_extraction_prompt(
                instance, first[0]["content"], answer
            )
            transcript.extend(extraction)
            target = provider.complete(extraction)
            transcript.append({"role": "assistant", "content": target})
    except Exception as exc:
        return SampleRecord(
            index=index,
            transcript=tuple(transcript),
            outcome=None,
            failure=f"transport error: {exc}",
            notions=frozenset(),
        )
    parsed = parse_response(instance, target, role=role)
    if not parsed.ok:
        return SampleRecord(
            index=index,
            transcript=tuple(transcript),
            outcome=None,
            failure=parsed.failure,
            notions=frozenset(),
        )
    return SampleRecord(
        index=index,
        transcript=tuple(transcript),
        outcome=parsed.outcome,
        failure=None,
        notions=_notion_names(instance, parsed.outcome),
    )


def _refinement_episode(
    instance: Instance,
    family: PromptFamily,
    provider: Provider,
    index: int,
) -> SampleRecord:
    notion = _normalize_notion(family.notion or "")
    first = render_prompt(instance, family)
    first_text = first[0]["content"]
    transcript = list(first)
    role = effective_role(instance, family)
    rounds = 0
    parsed = ParseResult(None, "no rounds ran")
    try:
        answer = provider.complete(first)
        transcript.append({"role": "assistant", "content": answer})
        rounds = 1
        parsed = parse_response(instance, answer, role=role)
        while rounds <= family.max_retries and not (
            parsed.ok and notion in _notion_names(instance, parsed.outcome)
        ):
            feedback = render_feedback_prompt(notion, first_text, answer)
            transcript.extend(feedback)
            answer = provider.complete(feedback)
            transcript.append({"role": "assistant", "content": answer})
            rounds += 1
            parsed = parse_response(instance, answer, role=role)
    except Exception as exc:
        return SampleRecord(
            index=index,
            transcript=tuple(transcript),
            outcome=None,
            failure=f"transport error: {exc}",
            notions=frozenset(),
            rounds=rounds,
        )
    if not parsed.ok:
        return SampleRecord(
            index=index,
            transcript=tuple(transcript),
            outcome=None,
            failure=parsed.failure,
            notions=frozenset(),
            rounds=rounds,
        )
    notions = _notion_names(instance, parsed.outcome)
    note = None
    if notion not in notions:
        note = f"not satisfied after {rounds} attempts"
    return SampleRecord(
        index=index,
        transcript=tuple(transcript),
        outcome=parsed.outcome,
        failure=None,
        notions=notions,
        rounds=rounds,
        note=note,
    )


def _run_one_instance(
    instance: Instance,
    family: PromptFamily,
    config: ProviderConfig,
    provider: Provider,
    sink,
    clock: Callable[[], float],
) -> RunRecord:
    resolved = family_for_instance(family, instance)
    if resolved.kind == "feedback_refinement":
        notion = _normalize_notion(resolved.notion or "")
        if notion not in FEEDBACK_TEXTS:
            raise ValidationError(f"unsupported feedback notion: {resolved.notion!r}")
        runner = _refinement_episode
    else:
        runner = _two_stage_sample
    run_id = f"{resolved.kind}-{instance.id}"
    if config.model:
        run_id = f"{config.model}-{run_id}"
    started = clock()

    def one(index: int) -> SampleRecord:
        sample = runner(instance, resolved, provider, index)
        if sink is not None:
            line = sample.to_json_dict(instance)
            line["run_id"] = run_id
            line["family"] = _family_snapshot(resolved)
            sink.append(line)
        return sample

    if config.concurrency > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            samples = list(pool.map(one, range(config.samples)))
    else:
        samples = [one(index) for index in range(config.samples)]

    return RunRecord(
        run_id=run_id,
        instance=instance,
        family_snapshot=_family_snapshot(resolved),
        config_snapshot=config.snapshot(),
        samples=tuple(samples),
        started_at=started,
        finished_at=clock(),
    )


def run_experiment(
    instance_ids: Sequence[str],
    family: PromptFamily,
    config: ProviderConfig,
    sink=None,
    provider: Optional[Provider] = None,
    clock: Callable[[], float] = time.time,
) -> list[RunRecord]:
    """Sample every instance `config.samples` times; record everything."""
    if provider is None:
        provider = make_provider(config)
    provider = _RetryingProvider(
        provider, config.transport_retries, config.backoff_seconds
    )
    records = []
    for instance_id in instance_ids:
        instance = (
            instance_id
            if isinstance(instance_id, Instance)
            else corpus.load_instance(instance_id)
        )
        records.append(
            _run_one_instance(instance, family, config, provider, sink, clock)
        )
    return records


def refinement_loop(
    instance,
    notion: str,
    config: ProviderConfig,
    max_retries: int = 2,
    sink=None,
    provider: Optional[Provider] = None,
    clock: Callable[[], float] = time.time,
) -> RunRecord:
    """Persona prompt, then up to `max_retries` notion-feedback rounds."""
    family = PromptFamily.feedback(notion, max_retries=max_retries)
    return run_experiment(
        [instance], family, config, sink=sink, provider=provider, clock=clock
    )[0]


# --- Run configuration files ------------------------------------------------


def family_from_dict(data: dict) -> PromptFamily:
    """Build a family from run-config JSON (menu options resolve later)."""
    from .prompts import PROMPT_KINDS

    kind = data.get("kind")
    if kind not in PROMPT_KINDS:
        raise ValidationError(
            f"unknown family kind: {kind!r} (known: {', '.join(PROMPT_KINDS)})"
        )
    known = {
        "kind",
        "notion",
        "variant",
        "example_instance_id",
        "context",
        "role",
        "max_retries",
        "last_line",
    }
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown family fields: {sorted(unknown)}")
    family = PromptFamily(
        kind=kind,
        notion=_normalize_notion(data["notion"]) if "notion" in data else None,
        variant=data.get("variant"),
        example_instance_id=data.get("example_instance_id"),
        context=data.get("context", "none"),
        role=data.get("role"),
        max_retries=data.get("max_retries", 2),
        last_line=data.get("last_line"),
    )
    if kind == "chain_of_thought" and family.example_instance_id is None:
        family = replace(family, example_instance_id="I0")
    return family


@dataclass(frozen=True)
class RunConfig:
    instance_ids: tuple[str, ...]
    family: PromptFamily
    provider: ProviderConfig
    output_path: Optional[str]
    seed: int


def load_run_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as stream:
        data = json.load(stream)
    provider_data = dict(data.get("provider", {}))
    script = tuple(provider_data.pop("script", ()))
    config = ProviderConfig(
        endpoint=provider_data.pop("endpoint"),
        model=provider_data.pop("model", ""),
        temperature=provider_data.pop("temperature", 1.0),
        samples=provider_data.pop("samples", 100),
        concurrency=provider_data.pop("concurrency", 1),
        transport_retries=provider_data.pop("transport_retries", 3),
        backoff_seconds=provider_data.pop("backoff_seconds", 1.0),
        env_key_name=provider_data.pop("env_key_name", None),
        script=script,
    )
    if provider_data:
        raise ValidationError(
            f"unknown provider fields: {sorted(provider_data)}"
        )
    return RunConfig(
        instance_ids=tuple(data["instances"]),
        family=family_from_dict(data["family"]),
        provider=config,
        output_path=data.get("output_path"),
        seed=data.get("seed", 0),
    )
