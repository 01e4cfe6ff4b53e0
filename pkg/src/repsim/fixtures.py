"""Deterministic synthetic activations.

All randomness comes from SplitMix64, so a (seed, layer) pair produces the
same bits in any language that implements the same four lines.  Each layer
gets its own stream seeded with ``seed ^ layer_index``; nothing is shared, so
layers can be generated in any order or in parallel.

Model pairs with planted structure stand in for trained networks:

* ``independent``: the two models share nothing;
* ``shared_prefix``: layers ``< k`` are bit-identical in both models;
* ``planted_peaks``: only the listed layers are shared.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .activation_store import ActivationSet, ActivationTensor
from .errors import InputError
from .topology import NetworkTopology, resolve_topology

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
TWO_POW_M53 = 2.0 ** -53
SCHEMES = ("independent", "shared_prefix", "planted_peaks")


def prng_next(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns (new_state, output)."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return state, z ^ (z >> 31)


def splitmix_stream(seed: int, count: int) -> np.ndarray:
    """The first ``count`` SplitMix64 outputs from ``seed`` as uint64.

    Output k only depends on seed + (k+1)*gamma, so the whole stream is one
    vectorized evaluation; it matches repeated ``prng_next`` calls exactly.
    """
    seed = np.uint64(seed & MASK64)
    with np.errstate(over="ignore"):
        z = seed + np.arange(1, count + 1, dtype=np.uint64) * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def uniform_open0(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit outputs to doubles in (0, 1] using the top 53 bits."""
    return ((bits >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * TWO_POW_M53


def gaussian_stream(seed: int, count: int) -> np.ndarray:
    """``count`` standard normals via Box-Muller on consecutive uniform pairs.

    Pair j uses uniforms (u1, u2) = outputs (2j, 2j+1) and yields
    sqrt(-2 ln u1) cos(2 pi u2) followed by sqrt(-2 ln u1) sin(2 pi u2).
    """
    pairs = (count + 1) // 2
    u = uniform_open0(splitmix_stream(seed, 2 * pairs))
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    theta = 2.0 * math.pi * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


def stream_seed(seed: int, layer_index: int, stream: int = 0) -> int:
    """Per-layer seed; stream 1 (the second model) starts from SplitMix64(seed)."""
    base = seed & MASK64
    for _ in range(stream):
        _, base = prng_next(base)
    return base ^ layer_index


def choose_examples(n: int, k: int, seed: int) -> list[int]:
    """A sorted subset of ``k`` distinct row indices out of ``n``, fixed by ``seed``."""
    if not 0 < k <= n:
        raise InputError(f"cannot choose {k} of {n} examples")
    order = list(range(n))
    state = seed & MASK64
    for i in range(k):
        state, v = prng_next(state)
        j = i + v % (n - i)
        order[i], order[j] = order[j], order[i]
    return sorted(order[:k])


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int
    topology: NetworkTopology
    shapes: tuple[tuple[int, ...], ...]
    scheme: str = "independent"
    k: int = 0
    peaks: tuple[int, ...] = ()
    model_ids: tuple[str, str] = ("model_a", "model_b")
    input_size: tuple[int, int] = (32, 32)
    topology_ref: str = field(default="", compare=False)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InputError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if len(self.shapes) != len(self.topology):
            raise InputError(f"{len(self.shapes)} layer shapes for a {len(self.topology)}-layer topology")
        if not 0 <= self.k <= len(self.topology):
            raise InputError(f"shared prefix {self.k} outside 0..{len(self.topology)}")
        if any(not 0 <= i < len(self.topology) for i in self.peaks):
            raise InputError(f"peak indices {self.peaks} outside the topology")
        object.__setattr__(self, "shapes", tuple(tuple(int(d) for d in s) for s in self.shapes))

    @classmethod
    def uniform(cls, seed: int, topology: NetworkTopology, n: int = 200,
                layer_shape: Sequence[int] = (1, 1, 64), **kwargs) -> "GeneratorSpec":
        shape = (n, *layer_shape)
        return cls(seed, topology, tuple(shape for _ in range(len(topology))), **kwargs)

    def shared_layers(self) -> set[int]:
        if self.scheme == "shared_prefix":
            return set(range(self.k))
        if self.scheme == "planted_peaks":
            return set(self.peaks)
        return set()

    def to_json(self) -> dict:
        shapes = [list(s) for s in self.shapes]
        doc = {"seed": self.seed, "topology": self.topology_ref or self.topology.name,
               "scheme": self.scheme, "k": self.k, "peaks": list(self.peaks),
               "model_ids": list(self.model_ids), "input_size": list(self.input_size)}
        if all(s == shapes[0] for s in shapes):
            doc["n"], doc["layer_shape"] = shapes[0][0], shapes[0][1:]
        else:
            doc["shapes"] = shapes
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "GeneratorSpec":
        try:
            ref = doc.get("topology", "yolov3")
            n_layers = len(doc["shapes"]) if "shapes" in doc else doc.get("layers")
            topo = resolve_topology(ref, n_layers)
            if "shapes" in doc:
                shapes = tuple(tuple(s) for s in doc["shapes"])
            else:
                shape = (int(doc.get("n", 200)), *doc.get("layer_shape", (1, 1, 64)))
                shapes = tuple(shape for _ in range(len(topo)))
            return cls(int(doc["seed"]), topo, shapes, doc.get("scheme", "independent"),
                       int(doc.get("k", 0)), tuple(int(i) for i in doc.get("peaks", ())),
                       tuple(doc.get("model_ids", ("model_a", "model_b"))),
                       tuple(doc.get("input_size", (32, 32))), topology_ref=str(ref))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed generator spec: {exc}") from None

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise InputError(f"no such generator spec: {path}") from None


def gaussian_tensor(spec: GeneratorSpec, layer: int, stream: int = 0) -> ActivationTensor:
    shape = spec.shapes[layer]
    values = gaussian_stream(stream_seed(spec.seed, layer, stream), math.prod(shape))
    return ActivationTensor(spec.model_ids[stream], layer,
                            values.astype(np.float32).reshape(shape), check_finite=False)


def gen_set(spec: GeneratorSpec, stream: int = 0) -> ActivationSet:
    """One model's activation set; stream 1 reuses stream 0 on shared layers."""
    shared = spec.shared_layers() if stream else set()
    tensors = {}
    for layer in range(len(spec.topology)):
        t = gaussian_tensor(spec, layer, 0 if layer in shared else stream)
        if layer in shared:
            t = ActivationTensor(spec.model_ids[stream], layer, t.values, check_finite=False)
        tensors[layer] = t
    return ActivationSet(spec.model_ids[stream], spec.seed, spec.input_size, tensors)


def gen_model_pair(spec: GeneratorSpec) -> tuple[ActivationSet, ActivationSet]:
    return gen_set(spec, 0), gen_set(spec, 1)


def planted_peaks_curve(n_layers: int, peaks: Sequence[int], base: float = 0.3,
                        height: float = 0.9) -> list[float]:
    """Flat curve with a spike at each listed index (spikes must not touch)."""
    curve = [base] * n_layers
    for i in peaks:
        curve[i] = height
    return curve


def random_matrix(seed: int, n: int, p: int) -> np.ndarray:
    """n-by-p float64 standard normals from the SplitMix64 stream."""
    return gaussian_stream(seed, n * p).reshape(n, p)
