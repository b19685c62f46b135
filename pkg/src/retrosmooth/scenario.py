"""Scenario files, named states, and deterministic JSON/CSV serialization.

A scenario is a single JSON document describing the monitored system, the
initial state, the record length, the smoothing time, and which priors to
build.  Matrices are carried as ``{"real": [[...]], "imag": [[...]]}``
nested arrays.  Supported system types:

``lindblad``
    ``hamiltonian``, ``jump_operators`` (each ``{"matrix", "efficiency"}``)
    and ``dt``; discretized into a joint instrument.
``joint_instrument``
    Explicit rank-one operations, one per ``(alice, bob)`` outcome pair.
``instrument``
    Explicit Kraus lists per outcome; no bob split, so record-register
    priors are unavailable.
``classical``
    A hidden-Markov model (``transition``, ``likelihood``); realized as an
    instrument whose Kraus operators are the single-entry matrices
    ``sqrt(D(x|x') p(y|x')) |x><x'|``, with the transition edge as the bob
    label.

All floats written by this module use 17 significant digits, so emitted
files are byte-stable and round-trip exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classical import ClassicalModel
from .errors import ScenarioError
from .retrodiction import PRIOR_KINDS
from .trajectory import (
    ConditionalOp,
    Instrument,
    JointInstrument,
    JumpChannel,
    LindbladSpec,
    alice_marginal,
    discretize,
)

ENV_CAP = "RETROSMOOTH_CAP"
DEFAULT_CAP = 10**6


# ---------------------------------------------------------------------------
# deterministic float / JSON formatting


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (lossless for binary64)."""
    return f"{float(x):.17g}"


def dumps_17(obj, indent: int = 0) -> str:
    """Serialize to JSON with floats at 17 significant digits, 2-space indent."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}{json.dumps(str(k))}: {dumps_17(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            return "[]"
        flat = all(isinstance(v, (int, float, bool, str)) or v is None for v in seq)
        if flat:
            return "[" + ", ".join(dumps_17(v) for v in seq) + "]"
        items = [f"{inner}{dumps_17(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt17(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def matrix_to_json(m) -> dict:
    a = np.asarray(m, dtype=complex)
    return {"real": a.real.tolist(), "imag": a.imag.tolist()}


def state_to_json(m) -> dict:
    a = np.asarray(m, dtype=complex)
    return {"dim": a.shape[0], "real": a.real.tolist(), "imag": a.imag.tolist()}


def matrix_from_json(obj, where: str) -> np.ndarray:
    if not isinstance(obj, dict) or "real" not in obj:
        raise ScenarioError(f"{where}: expected a matrix object with 'real' (and 'imag') arrays")
    try:
        real = np.asarray(obj["real"], dtype=float)
        imag = np.asarray(obj.get("imag", np.zeros_like(real)), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: malformed matrix arrays ({exc})") from None
    if real.shape != imag.shape or real.ndim != 2:
        raise ScenarioError(f"{where}: real/imag parts must be equal-shape 2-d arrays")
    return real + 1j * imag


# ---------------------------------------------------------------------------
# named states


def named_state(name: str, dim: int) -> np.ndarray:
    """Resolve a named initial state: maximally_mixed, ground, or plus."""
    if name == "maximally_mixed":
        return np.eye(dim, dtype=complex) / dim
    if name == "ground":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    if name == "plus":
        if dim != 2:
            raise ScenarioError(f"named state 'plus' requires a qubit, got dim {dim}")
        return np.full((2, 2), 0.5, dtype=complex)
    raise ScenarioError(f"unknown named state {name!r}")


# ---------------------------------------------------------------------------
# system construction


@dataclass(frozen=True)
class BuiltSystem:
    """Instrument form of a scenario's system, with optional extras."""

    instrument: Instrument
    joint: JointInstrument | None
    classical: ClassicalModel | None
    dim: int


def classical_to_joint(model: ClassicalModel) -> JointInstrument:
    """Realize a hidden-Markov model as a joint instrument.

    Outcome ``y`` with transition ``x' -> x`` becomes the rank-one operation
    ``sqrt(D(x|x') p(y|x')) |x><x'|``; the transition edge ``"x'>x"`` plays
    the bob role, so the unmonitored side is the state path itself.
    """
    n = model.n_states
    ops = {}
    for y in model.outcome_labels:
        for x_old in range(n):
            for x_new in range(n):
                w = model.transition[x_new, x_old] * model.likelihood[y][x_old]
                if w <= 0.0:
                    continue
                m = np.zeros((n, n), dtype=complex)
                m[x_new, x_old] = np.sqrt(w)
                ops[(y, f"{x_old}>{x_new}")] = ConditionalOp((m,))
    return JointInstrument(ops)


def _build_system(spec: dict) -> BuiltSystem:
    if not isinstance(spec, dict) or "type" not in spec:
        raise ScenarioError("system: expected an object with a 'type' field")
    kind = spec["type"]
    if kind == "lindblad":
        ham = matrix_from_json(spec.get("hamiltonian"), "system.hamiltonian")
        channels = []
        for i, ch in enumerate(spec.get("jump_operators", [])):
            where = f"system.jump_operators[{i}]"
            if not isinstance(ch, dict) or "matrix" not in ch:
                raise ScenarioError(f"{where}: expected an object with a 'matrix'")
            channels.append(
                JumpChannel(
                    operator=matrix_from_json(ch["matrix"], where),
                    efficiency=float(ch.get("efficiency", 1.0)),
                    detection=str(ch.get("detection", "jump")),
                )
            )
        if "dt" not in spec:
            raise ScenarioError("system.dt: required for lindblad systems")
        joint = discretize(LindbladSpec(ham, tuple(channels), float(spec["dt"])))
        return BuiltSystem(alice_marginal(joint), joint, None, joint.dim)
    if kind == "joint_instrument":
        entries = spec.get("operations")
        if not isinstance(entries, list) or not entries:
            raise ScenarioError("system.operations: expected a nonempty list")
        ops = {}
        for i, entry in enumerate(entries):
            where = f"system.operations[{i}]"
            try:
                label = (str(entry["alice"]), str(entry["bob"]))
                kraus = entry["kraus"]
            except (KeyError, TypeError):
                raise ScenarioError(f"{where}: needs 'alice', 'bob' and 'kraus'") from None
            mats = tuple(matrix_from_json(k, f"{where}.kraus[{j}]") for j, k in enumerate(kraus))
            ops[label] = ConditionalOp(mats)
        joint = JointInstrument(ops)
        return BuiltSystem(alice_marginal(joint), joint, None, joint.dim)
    if kind == "instrument":
        table = spec.get("operations")
        if not isinstance(table, dict) or not table:
            raise ScenarioError("system.operations: expected an object keyed by outcome")
        ops = {}
        for y, kraus in table.items():
            mats = tuple(
                matrix_from_json(k, f"system.operations[{y!r}][{j}]") for j, k in enumerate(kraus)
            )
            ops[str(y)] = ConditionalOp(mats)
        inst = Instrument(ops)
        return BuiltSystem(inst, None, None, inst.dim)
    if kind == "classical":
        try:
            transition = np.asarray(spec["transition"], dtype=float)
            likelihood = {str(y): np.asarray(v, dtype=float) for y, v in spec["likelihood"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"system: malformed classical model ({exc})") from None
        model = ClassicalModel(transition, likelihood)
        joint = classical_to_joint(model)
        return BuiltSystem(alice_marginal(joint), joint, model, model.n_states)
    raise ScenarioError(f"system.type: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# scenario


@dataclass
class Scenario:
    """Parsed scenario configuration; use :meth:`build` for the instruments."""

    name: str
    system_spec: dict
    rho0_spec: object
    steps: int
    smoothing_index: int
    prior_kinds: tuple[str, ...]
    seed: int = 0
    enumeration_cap: int = DEFAULT_CAP
    n_trajectories: int = 100
    custom_prior: dict | None = None
    out_dir: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario: expected a JSON object")
        try:
            steps = int(doc["steps"])
        except (KeyError, TypeError, ValueError):
            raise ScenarioError("steps: required integer") from None
        if steps < 0:
            raise ScenarioError(f"steps: must be nonnegative, got {steps}")
        t = doc.get("smoothing_time_index", steps)
        try:
            t = int(t)
        except (TypeError, ValueError):
            raise ScenarioError("smoothing_time_index: must be an integer") from None
        if not 0 <= t <= steps:
            raise ScenarioError(f"smoothing_time_index: {t} outside [0, {steps}]")
        kinds = tuple(str(k) for k in doc.get("prior_kinds", ["pf"]))
        for k in kinds:
            if k not in PRIOR_KINDS:
                raise ScenarioError(f"prior_kinds: unknown kind {k!r} (choose from {PRIOR_KINDS})")
        if "system" not in doc:
            raise ScenarioError("system: required")
        if "rho0" not in doc:
            raise ScenarioError("rho0: required")
        cap = doc.get("enumeration_cap", DEFAULT_CAP)
        try:
            cap = int(cap)
        except (TypeError, ValueError):
            raise ScenarioError("enumeration_cap: must be an integer") from None
        return cls(
            name=str(doc.get("name", "scenario")),
            system_spec=doc["system"],
            rho0_spec=doc["rho0"],
            steps=steps,
            smoothing_index=t,
            prior_kinds=kinds,
            seed=int(doc.get("seed", 0)),
            enumeration_cap=cap,
            n_trajectories=int(doc.get("n_trajectories", 100)),
            custom_prior=doc.get("custom_prior"),
            out_dir=doc.get("out_dir"),
            raw=doc,
        )

    @classmethod
    def from_file(cls, path) -> "Scenario":
        p = Path(path)
        try:
            doc = json.loads(p.read_text())
        except FileNotFoundError:
            raise ScenarioError(f"scenario file not found: {p}") from None
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{p}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        return cls.from_dict(doc)

    def build(self) -> BuiltSystem:
        return _build_system(self.system_spec)

    def rho0(self, dim: int) -> np.ndarray:
        spec = self.rho0_spec
        if isinstance(spec, str):
            return named_state(spec, dim)
        if isinstance(spec, list):
            probs = np.asarray(spec, dtype=float)
            if probs.ndim != 1 or probs.shape[0] != dim:
                raise ScenarioError(f"rho0: probability vector must have length {dim}")
            return np.diag(probs).astype(complex)
        rho = matrix_from_json(spec, "rho0")
        if rho.shape != (dim, dim):
            raise ScenarioError(f"rho0: shape {rho.shape} does not match system dim {dim}")
        return rho

    def cap(self) -> int:
        env = os.environ.get(ENV_CAP)
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ScenarioError(f"{ENV_CAP}: expected an integer, got {env!r}") from None
        return self.enumeration_cap


def demo_scenario(seed: int = 7) -> Scenario:
    """Built-in driven-damped qubit exercising all five priors.

    Rabi drive at the decay rate, half-efficient jump detection, four steps
    of ``dt = 0.02`` in units of the decay rate, smoothing at step two, from
    the maximally mixed initial state.
    """
    sx = {"real": [[0.0, 0.5], [0.5, 0.0]], "imag": [[0.0, 0.0], [0.0, 0.0]]}
    lower = {"real": [[0.0, 1.0], [0.0, 0.0]], "imag": [[0.0, 0.0], [0.0, 0.0]]}
    doc = {
        "name": "driven-damped-qubit",
        "system": {
            "type": "lindblad",
            "hamiltonian": sx,
            "jump_operators": [{"matrix": lower, "efficiency": 0.5}],
            "dt": 0.02,
        },
        "rho0": "maximally_mixed",
        "steps": 4,
        "smoothing_time_index": 2,
        "prior_kinds": ["pf", "gw", "gw-variant", "pf-variant", "clhs"],
        "seed": seed,
        "enumeration_cap": DEFAULT_CAP,
    }
    return Scenario.from_dict(doc)


def classical_demo_scenario(n_states: int = 2, steps: int = 5, seed: int = 3) -> Scenario:
    """Built-in classical chains used by the classical-limit checks."""
    if n_states == 2:
        doc = {
            "name": "classical-2state",
            "system": {
                "type": "classical",
                "transition": [[0.9, 0.2], [0.1, 0.8]],
                "likelihood": {"0": [0.8, 0.3], "1": [0.2, 0.7]},
            },
            "rho0": [0.5, 0.5],
        }
    elif n_states == 3:
        doc = {
            "name": "classical-3state",
            "system": {
                "type": "classical",
                "transition": [
                    [0.7, 0.15, 0.1],
                    [0.2, 0.7, 0.2],
                    [0.1, 0.15, 0.7],
                ],
                "likelihood": {
                    "a": [0.6, 0.25, 0.1],
                    "b": [0.4, 0.75, 0.9],
                },
            },
            "rho0": [0.5, 0.3, 0.2],
        }
    else:
        raise ScenarioError(f"no built-in classical chain with {n_states} states")
    # the record-register prior branches over transition edges (n^2 per step),
    # so the 3-state chain ships with the trivial prior only
    kinds = ["pf", "gw-variant"] if n_states == 2 else ["pf"]
    doc.update({"steps": steps, "smoothing_time_index": min(2, steps), "seed": seed,
                "prior_kinds": kinds})
    return Scenario.from_dict(doc)


# ---------------------------------------------------------------------------
# trajectory files (JSON lines)


def write_trajectories(path, scenario: Scenario, records: list, kind: str) -> None:
    """Write sampled records as JSON lines after one header metadata line.

    Each step line is ``{"step": i, "alice": y, "bob": u-or-null}``;
    trajectories are delimited by the step index resetting to zero.
    """
    lines = [
        json.dumps(
            {
                "scenario": scenario.name,
                "seed": scenario.seed,
                "steps": scenario.steps,
                "n_trajectories": len(records),
                "kind": kind,
            },
            separators=(", ", ": "),
        )
    ]
    for record in records:
        for i, outcome in enumerate(record):
            if isinstance(outcome, tuple):
                alice, bob = outcome
            else:
                alice, bob = outcome, None
            lines.append(json.dumps({"step": i, "alice": alice, "bob": bob}, separators=(", ", ": ")))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectories(path) -> tuple[dict, list[list[tuple[str, str | None]]]]:
    """Parse a trajectory file back into its header and per-trajectory records."""
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ScenarioError(f"{path}: empty trajectory file")
    try:
        header = json.loads(text[0])
    except json.JSONDecodeError:
        raise ScenarioError(f"{path}:1: malformed header line") from None
    records: list[list[tuple[str, str | None]]] = []
    for n, line in enumerate(text[1:], start=2):
        try:
            entry = json.loads(line)
            step, alice, bob = int(entry["step"]), str(entry["alice"]), entry["bob"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise ScenarioError(f"{path}:{n}: malformed record line") from None
        if step == 0:
            records.append([])
        if not records or step != len(records[-1]):
            raise ScenarioError(f"{path}:{n}: step index {step} out of sequence")
        records[-1].append((alice, None if bob is None else str(bob)))
    return header, records
