"""Run configuration files: plain ``key = value`` lines, '#' comments.

The file names the backend kind and per-role models, the pipeline knobs, and
the QA bank; CLI flags override file values. Relative paths resolve against
the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .backends import (
    FaultInjectingBackend,
    HashingEmbedder,
    HttpClient,
    HttpEmbeddingBackend,
    HttpMultimodalBackend,
    HttpTextBackend,
    MockMultimodalBackend,
    MockScript,
    MockTextBackend,
)
from .datasets import load_dataset
from .errors import ConfigError
from .orchestrator import PipelineDeps
from .prompts import load_default_library, load_library
from .retrieval import build_index, load_index
from .tracing import FrozenClock, RealClock
from .types import McqExample, PipelineConfig, PipelineMode

KNOWN_KEYS = {
    "backend",
    "mock_script",
    "embed_dim",
    "embed_seed",
    "fault_rate",
    "fault_seed",
    "fault_roles",
    "endpoint",
    "model.embedding",
    "model.context",
    "model.reasoning",
    "model.validation",
    "request_timeout",
    "bank",
    "index",
    "n_retrieve",
    "k_rerank",
    "confidence_threshold",
    "mode",
    "max_in_flight",
    "retry_limit",
    "seed",
    "clock",
    "templates_dir",
    "backoff_base",
    "backoff_jitter",
}

MOCK_ROLES = ("rerank", "reason", "validate")


def parse_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    unknown: list[str] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            unknown.append(f"{key} (line {lineno})")
            continue
        values[key] = value.strip()
    if unknown:
        raise ConfigError(f"{path}: unknown key(s): {', '.join(unknown)}")
    return values


def _get_bool(values: dict[str, str], key: str, default: bool) -> bool:
    raw = values.get(key)
    if raw is None:
        return default
    lowered = raw.lower()
    if lowered in ("on", "true", "yes", "1"):
        return True
    if lowered in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected on/off, got {raw!r}")


def _get_int(values: dict[str, str], key: str, default: int) -> int:
    raw = values.get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected integer, got {raw!r}") from None


def _get_float(values: dict[str, str], key: str, default: float) -> float:
    raw = values.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected number, got {raw!r}") from None


def build_pipeline_config(
    values: dict[str, str],
    mode_override: Optional[str] = None,
    seed_override: Optional[int] = None,
) -> PipelineConfig:
    mode_raw = mode_override or values.get("mode", "full")
    try:
        mode = PipelineMode(mode_raw)
    except ValueError:
        raise ConfigError(f"unknown mode {mode_raw!r}") from None
    return PipelineConfig(
        n_retrieve=_get_int(values, "n_retrieve", 10),
        k_rerank=_get_int(values, "k_rerank", 5),
        confidence_threshold=_get_float(values, "confidence_threshold", 0.7),
        mode=mode,
        max_in_flight=_get_int(values, "max_in_flight", 4),
        retry_limit=_get_int(values, "retry_limit", 1),
        seed=seed_override if seed_override is not None else _get_int(values, "seed", 0),
    )


@dataclass
class RunSetup:
    cfg: PipelineConfig
    deps: PipelineDeps
    bank: list[McqExample]


def build_embedder(values: dict[str, str], base_dir: Path, seed: int):
    kind = values.get("backend", "mock")
    if kind == "mock":
        return HashingEmbedder(
            dim=_get_int(values, "embed_dim", 32),
            seed=_get_int(values, "embed_seed", seed),
        )
    if kind == "http":
        client = _http_client(values)
        return HttpEmbeddingBackend(client, _model(values, "model.embedding"))
    raise ConfigError(f"unknown backend kind {kind!r}")


def _http_client(values: dict[str, str]) -> HttpClient:
    endpoint = values.get("endpoint")
    if not endpoint:
        raise ConfigError("http backend needs 'endpoint'")
    return HttpClient(endpoint, timeout=_get_float(values, "request_timeout", 60.0))


def _model(values: dict[str, str], key: str) -> str:
    model = values.get(key)
    if not model:
        raise ConfigError(f"http backend needs '{key}'")
    return model


def _maybe_faulty(backend, role: str, values: dict[str, str]):
    rate = _get_float(values, "fault_rate", 0.0)
    if rate <= 0.0:
        return backend
    roles = {
        r.strip()
        for r in values.get("fault_roles", ",".join(MOCK_ROLES)).split(",")
        if r.strip()
    }
    if role not in roles:
        return backend
    return FaultInjectingBackend(backend, rate=rate, seed=_get_int(values, "fault_seed", 0))


def load_run_setup(
    config_path: str | Path,
    mode_override: Optional[str] = None,
    seed_override: Optional[int] = None,
) -> RunSetup:
    """Load a run config and assemble backends, index, and templates."""
    config_path = Path(config_path)
    base_dir = config_path.parent
    values = parse_config_file(config_path)
    cfg = build_pipeline_config(values, mode_override, seed_override)

    kind = values.get("backend", "mock")
    if kind == "mock":
        script_path = values.get("mock_script")
        if not script_path:
            raise ConfigError("mock backend needs 'mock_script'")
        script = MockScript.from_file(base_dir / script_path)
        reasoning = MockMultimodalBackend(script, role="reason")
        context_llm = MockTextBackend(script, role="rerank")
        validation_llm = MockTextBackend(script, role="validate")
    elif kind == "http":
        client = _http_client(values)
        reasoning = HttpMultimodalBackend(client, _model(values, "model.reasoning"))
        context_llm = HttpTextBackend(client, _model(values, "model.context"))
        validation_llm = HttpTextBackend(client, _model(values, "model.validation"))
    else:
        raise ConfigError(f"unknown backend kind {kind!r}")

    embedder = None
    index = None
    bank: list[McqExample] = []
    if cfg.mode.uses_context:
        bank_path = values.get("bank")
        if not bank_path:
            raise ConfigError(f"mode {cfg.mode.value} needs 'bank'")
        bank = load_dataset(base_dir / bank_path)
        embedder = _maybe_faulty(build_embedder(values, base_dir, cfg.seed), "embed", values)
        if values.get("index"):
            index = load_index(base_dir / values["index"])
            bank_ids = {ex.id for ex in bank}
            missing = [i for i in index.ids if i not in bank_ids]
            if missing:
                raise ConfigError(
                    f"index entries missing from bank: {missing[:5]}"
                    + ("..." if len(missing) > 5 else "")
                )
        else:
            index = build_index(bank, embedder)

    clock_kind = values.get("clock", "real")
    if clock_kind == "fixed":
        clock = FrozenClock()
    elif clock_kind == "real":
        clock = RealClock()
    else:
        raise ConfigError(f"clock must be real or fixed, got {clock_kind!r}")

    templates = (
        load_library(base_dir / values["templates_dir"])
        if values.get("templates_dir")
        else load_default_library()
    )

    deps = PipelineDeps(
        reasoning_mllm=_maybe_faulty(reasoning, "reason", values),
        embedder=embedder,
        context_llm=_maybe_faulty(context_llm, "rerank", values),
        validation_llm=_maybe_faulty(validation_llm, "validate", values),
        index=index,
        bank_by_id={ex.id: ex for ex in bank},
        templates=templates,
        clock=clock,
        backoff_base=_get_float(values, "backoff_base", 0.25),
        backoff_jitter=_get_bool(values, "backoff_jitter", False),
    )
    return RunSetup(cfg=cfg, deps=deps, bank=bank)
