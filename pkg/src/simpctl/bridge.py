"""Adapters for driving external simplifiers with tagged inputs.

Three modes:

* ``subprocess`` -- line protocol: one UTF-8 input per line on the child's
  stdin, exactly one output line per input on its stdout, order-preserving.
  Embedded newlines travel escaped as ``\\n`` (and ``\\`` as ``\\\\``).
* ``http`` -- one chat-completions-style request per input; the prompt
  template is rendered around the input and the reply is taken from the
  first choice. Transient failures retry with exponential backoff.
* ``builtin`` -- in-process mock simplifiers for tests and desk-scale
  search experiments.
"""

from __future__ import annotations

import os
import re
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from .errors import BridgeError, ConfigError, ProtocolError

MODES = ("subprocess", "http", "builtin")

_CT_PREFIX_RE = re.compile(
    r"^<DEPENDENCYTREEDEPTH_(-?\d+(?:\.\d+)?)> "
    r"<WORDRANK_(-?\d+(?:\.\d+)?)> "
    r"<REPLACEONLYLEVENSHTEIN_(-?\d+(?:\.\d+)?)> "
    r"<LENGTHRATIO_(-?\d+(?:\.\d+)?)> "
)
_TOKENISH_RE = re.compile(r"^<[A-Z]+_")

DEFAULT_SUBSTITUTIONS = {
    "utilize": "use",
    "commence": "start",
    "demonstrate": "show",
    "approximately": "about",
    "individuals": "people",
    "sufficient": "enough",
}


@dataclass(frozen=True)
class SimplifierSpec:
    """Configuration of one external simplifier endpoint."""

    mode: str
    command: tuple[str, ...] = ()
    endpoint: str = ""
    model: str = ""
    prompt_template: str | None = None
    timeout_s: float = 60.0
    retries: int = 2
    batch_size: int = 16
    api_key_env: str | None = None
    params: Mapping | None = None
    builtin: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s}")
        if self.retries < 0:
            raise ConfigError(f"retries must be >= 0, got {self.retries}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode == "subprocess" and not self.command:
            raise ConfigError("subprocess mode needs a command")
        if self.mode == "http" and not self.endpoint:
            raise ConfigError("http mode needs an endpoint URL")
        if self.mode == "builtin" and self.builtin not in builtin_mocks():
            raise ConfigError(
                f"unknown builtin simplifier {self.builtin!r}; "
                f"available: {sorted(builtin_mocks())}"
            )

    @classmethod
    def from_config(cls, config: Mapping) -> "SimplifierSpec":
        known = {
            "mode", "command", "endpoint", "model", "prompt_template",
            "timeout_s", "retries", "batch_size", "api_key_env", "params", "builtin",
        }
        unknown = set(config) - known
        if unknown:
            raise ConfigError(f"unknown bridge config keys: {sorted(unknown)}")
        if "mode" not in config:
            raise ConfigError("bridge config needs a 'mode'")
        kwargs = dict(config)
        if "command" in kwargs:
            kwargs["command"] = tuple(kwargs["command"])
        return cls(**kwargs)


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt text with exactly one ``{{input}}`` placeholder."""

    text: str

    def __post_init__(self):
        if self.text.count("{{input}}") != 1:
            raise ConfigError(
                f"prompt template must contain exactly one {{{{input}}}} placeholder, "
                f"found {self.text.count('{{input}}')}"
            )

    def render(self, input_text: str) -> str:
        return self.text.replace("{{input}}", input_text)

    @classmethod
    def load(cls, path: str | Path) -> "PromptTemplate":
        return cls(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> "PromptTemplate":
        text = resources.files("simpctl").joinpath("data/default_prompt.txt").read_text("utf-8")
        return cls(text)


def escape_line(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def unescape_line(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(text[i])
        i += 1
    return "".join(out)


def simplify_batch(spec: SimplifierSpec, inputs: Sequence[str]) -> list[str]:
    """Run every input through the configured simplifier, order-preserving."""
    if not inputs:
        raise ConfigError("simplify_batch needs at least one input")
    if spec.mode == "subprocess":
        return _simplify_subprocess(spec, list(inputs))
    if spec.mode == "http":
        return _simplify_http(spec, list(inputs))
    fn = builtin_mocks()[spec.builtin]
    return [fn(line) for line in inputs]


def run_simplifier(
    simplifier: "SimplifierSpec | Callable[[list[str]], list[str]]",
    inputs: Sequence[str],
) -> list[str]:
    """Dispatch to simplify_batch or a plain batch callable, enforcing the
    one-output-per-input protocol either way."""
    if isinstance(simplifier, SimplifierSpec):
        return simplify_batch(simplifier, inputs)
    outputs = simplifier(list(inputs))
    if len(outputs) != len(inputs):
        raise ProtocolError(f"expected {len(inputs)} outputs, got {len(outputs)}")
    return list(outputs)


def _simplify_subprocess(spec: SimplifierSpec, inputs: list[str]) -> list[str]:
    outputs: list[str] = []
    for batch_index in range(0, len(inputs), spec.batch_size):
        batch = inputs[batch_index : batch_index + spec.batch_size]
        payload = "\n".join(escape_line(line) for line in batch) + "\n"
        try:
            proc = subprocess.run(
                list(spec.command),
                input=payload,
                capture_output=True,
                text=True,
                encoding="utf-8",
                timeout=spec.timeout_s,
            )
        except subprocess.TimeoutExpired as exc:
            raise BridgeError(
                f"batch {batch_index // spec.batch_size} timed out after {spec.timeout_s}s"
            ) from exc
        except OSError as exc:
            raise BridgeError(f"failed to launch {spec.command[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr[-500:] if proc.stderr else "<no stderr>"
            raise BridgeError(
                f"child exited with status {proc.returncode}; stderr tail: {tail}"
            )
        lines = proc.stdout.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if len(lines) != len(batch):
            raise ProtocolError(f"expected {len(batch)} output lines, got {len(lines)}")
        outputs.extend(unescape_line(line) for line in lines)
    return outputs


_TRANSIENT_STATUSES = frozenset({429, 500, 502, 503, 504})


def _simplify_http(spec: SimplifierSpec, inputs: list[str]) -> list[str]:
    template = (
        PromptTemplate.load(spec.prompt_template)
        if spec.prompt_template
        else PromptTemplate.default()
    )
    headers = {"Content-Type": "application/json"}
    if spec.api_key_env:
        key = os.environ.get(spec.api_key_env)
        if not key:
            raise ConfigError(f"API key environment variable {spec.api_key_env!r} is not set")
        headers["Authorization"] = f"Bearer {key}"

    def one(index_and_input: tuple[int, str]) -> tuple[int, str]:
        index, text = index_and_input
        body = {
            "model": spec.model,
            "messages": [{"role": "user", "content": template.render(text)}],
        }
        if spec.params:
            body.update(spec.params)
        last_error = "no attempt made"
        for attempt in range(spec.retries + 1):
            if attempt:
                time.sleep(min(0.5 * 2 ** (attempt - 1), 8.0))
            try:
                response = httpx.post(
                    spec.endpoint, json=body, headers=headers, timeout=spec.timeout_s
                )
            except httpx.TimeoutException:
                last_error = f"timeout after {spec.timeout_s}s (input {index})"
                continue
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code in _TRANSIENT_STATUSES:
                last_error = f"HTTP {response.status_code}"
                continue
            if not 200 <= response.status_code < 300:
                raise BridgeError(
                    f"HTTP {response.status_code} from {spec.endpoint} (input {index}): "
                    f"{response.text[:200]}"
                )
            try:
                content = response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise ProtocolError(f"unexpected response shape (input {index}): {exc}") from exc
            return index, str(content)
        raise BridgeError(
            f"giving up on input {index} after {spec.retries + 1} attempts; last: {last_error}"
        )

    with ThreadPoolExecutor(max_workers=spec.batch_size) as pool:
        results = list(pool.map(one, enumerate(inputs)))
    results.sort(key=lambda pair: pair[0])
    return [text for _, text in results]


def strip_control_prefix(line: str) -> tuple[dict[str, float] | None, str]:
    """Split a tagged line into (control values, remainder).

    Lines without a token-like prefix pass through as (None, line); lines
    that start like a control token but do not form the full four-token
    prefix are malformed.
    """
    match = _CT_PREFIX_RE.match(line)
    if match:
        values = dict(
            zip(
                ("DEPENDENCYTREEDEPTH", "WORDRANK", "REPLACEONLYLEVENSHTEIN", "LENGTHRATIO"),
                (float(g) for g in match.groups()),
            )
        )
        return values, line[match.end():]
    if _TOKENISH_RE.match(line):
        raise ProtocolError(f"malformed control-token prefix: {line[:60]!r}")
    return None, line


def _mock_identity(line: str) -> str:
    _, rest = strip_control_prefix(line)
    return rest


def _mock_truncate_to_lr(line: str) -> str:
    values, rest = strip_control_prefix(line)
    if values is None:
        raise ProtocolError("truncate_to_lr needs a control-token prefix")
    keep = int(values["LENGTHRATIO"] * len(rest))
    return rest[:keep]


def _mock_lexical_sub(line: str) -> str:
    _, rest = strip_control_prefix(line)
    for term, replacement in DEFAULT_SUBSTITUTIONS.items():
        rest = re.sub(rf"\b{re.escape(term)}\b", replacement, rest, flags=re.IGNORECASE)
    return rest


def builtin_mocks() -> dict[str, Callable[[str], str]]:
    """Test-double simplifiers keyed by name.

    ``identity`` echoes the de-tagged input; ``truncate_to_lr`` keeps the
    first floor(LR * len) characters of the de-tagged source, making the
    objective LR-sensitive; ``lexical_sub`` applies a fixed easy-word
    substitution table, making it WR-sensitive.
    """
    return {
        "identity": _mock_identity,
        "truncate_to_lr": _mock_truncate_to_lr,
        "lexical_sub": _mock_lexical_sub,
    }
