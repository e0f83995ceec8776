"""JSON checkpoints for flat and hierarchical transport maps.

A checkpoint holds three parts:

* ``architecture``: the structure needed to rebuild the map, i.e. kind,
  dimensions, layer count, tree depth, subnet widths and mixing kind, plus a
  per-layer structural tree;
* ``buffers``: fixed, non-trainable arrays (reflectors, Moebius constants,
  normaliser), in the same traversal order as the architecture tree;
* ``params``: trainable arrays as nested lists, ordered like ``tmap.params``.

Floats are written with Python's shortest round-trip repr, so loading
reproduces every parameter bit for bit.
"""
import hashlib
import json
from pathlib import Path

import numpy as np

from .coupling import CouplingLayer, DiagonalAffine, InnMap
from .hierarchical import HintMap, SplitNode, SplitTree
from .mlp import DenseNet
from .numerics import HouseholderStack, MobiusParams

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, truncated, inconsistent or version-mismatched checkpoint."""


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

def _net_arch(net):
    return {"widths": [int(w) for w in net.widths], "leaky_slope": net.leaky_slope, "output_clamp": net.output_clamp}


def _stack_buf(Q):
    return {"dim": int(Q.dim), "reflectors": Q.reflectors.tolist()}


def _mixing_enc(mixing):
    if isinstance(mixing, MobiusParams):
        return "mobius", {"b": mixing.b.tolist(), "a": mixing.a.tolist(), "alpha": float(mixing.alpha),
                          "gamma": int(mixing.gamma), "Q": _stack_buf(mixing.Q)}
    return "householder", _stack_buf(mixing)


def _node_enc(node):
    if node is None:
        return None, None
    ma, mb = _node_enc(node.minus)
    pa, pb = _node_enc(node.plus)
    arch = {"dim": node.dim, "split": list(node.split), "s_net": _net_arch(node.s_net),
            "t_net": _net_arch(node.t_net), "minus": ma, "plus": pa}
    return arch, {"Q": _stack_buf(node.Q), "minus": mb, "plus": pb}


def _layer_enc(layer):
    if isinstance(layer, CouplingLayer):
        kind, buf = _mixing_enc(layer.mixing)
        arch = {"type": "coupling", "dim": layer.dim, "split": list(layer.split), "mixing": kind,
                "s_net": _net_arch(layer.s_net), "t_net": _net_arch(layer.t_net)}
        return arch, {"mixing": buf}
    if isinstance(layer, SplitTree):
        arch, buf = _node_enc(layer.root)
        return {"type": "tree", "root": arch}, buf
    raise CheckpointError(f"cannot serialise layer of type {type(layer).__name__}")


def _normalizer_enc(norm):
    if norm is None:
        return None
    return {"shift": norm.shift.tolist(), "scale": norm.scale.tolist()}


def _summary(tmap, case):
    first = tmap.layers[0]
    if isinstance(tmap, HintMap):
        nets = first.root.s_net
        mixing = "householder"
        depth = max(l.depth for l in tmap.layers)
    else:
        nets = first.s_net
        mixing = "mobius" if first.conformal else "householder"
        depth = 1
    return {
        "case": case,
        "dim": int(tmap.dim),
        "dim_y": int(getattr(tmap, "dim_y", 0)),
        "dim_x": int(getattr(tmap, "dim_x", tmap.dim)),
        "n_layers": len(tmap.layers),
        "depth": int(depth),
        "subnet_widths": [int(w) for w in nets.widths[1:-1]],
        "mixing": mixing,
    }


def to_dict(tmap, case=None, metadata=None):
    if isinstance(tmap, HintMap):
        kind = "hint"
        case = case or "case3"
    elif isinstance(tmap, InnMap):
        kind = "inn"
        case = case or "case1"
    else:
        raise CheckpointError(f"cannot serialise map of type {type(tmap).__name__}")
    layers = [_layer_enc(l) for l in tmap.layers]
    arch = {"kind": kind, **_summary(tmap, case), "layers": [a for a, _ in layers]}
    if kind == "hint":
        arch["kr_enforced"] = bool(tmap.kr_enforced)
    return {
        "format_version": FORMAT_VERSION,
        "architecture": arch,
        "buffers": {"layers": [b for _, b in layers], "normalizer": _normalizer_enc(tmap.normalizer)},
        "params": [p.tolist() for p in tmap.params],
        "metadata": dict(metadata or {}),
    }


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

def _net_dec(arch):
    w = arch["widths"]
    weights = [np.zeros((w[i + 1], w[i])) for i in range(len(w) - 1)]
    biases = [np.zeros(w[i + 1]) for i in range(len(w) - 1)]
    return DenseNet(list(w), weights, biases, arch["leaky_slope"], arch["output_clamp"])


def _stack_dec(buf):
    V = np.asarray(buf["reflectors"], dtype=np.float64).reshape(-1, buf["dim"])
    return HouseholderStack(V, buf["dim"])


def _node_dec(arch, buf):
    if arch is None:
        return None
    return SplitNode(arch["dim"], tuple(arch["split"]), _stack_dec(buf["Q"]), _net_dec(arch["s_net"]),
                     _net_dec(arch["t_net"]), _node_dec(arch["minus"], buf["minus"]),
                     _node_dec(arch["plus"], buf["plus"]))


def _layer_dec(arch, buf):
    if arch["type"] == "tree":
        return SplitTree(_node_dec(arch["root"], buf))
    if arch["type"] == "coupling":
        mb = buf["mixing"]
        if arch["mixing"] == "mobius":
            mixing = MobiusParams(np.asarray(mb["b"]), np.asarray(mb["a"]), mb["alpha"], mb["gamma"],
                                  _stack_dec(mb["Q"]))
        else:
            mixing = _stack_dec(mb)
        return CouplingLayer(arch["dim"], tuple(arch["split"]), mixing, _net_dec(arch["s_net"]),
                             _net_dec(arch["t_net"]))
    raise CheckpointError(f"unknown layer type {arch['type']!r}")


def from_dict(doc):
    """Rebuild a map from :func:`to_dict` output; returns ``(map, metadata)``."""
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointError("not a transport-map checkpoint (no format_version)")
    if doc["format_version"] != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format_version {doc['format_version']!r} is not supported "
                              f"(this build reads version {FORMAT_VERSION})")
    try:
        arch = doc["architecture"]
        bufs = doc["buffers"]
        layers = [_layer_dec(a, b) for a, b in zip(arch["layers"], bufs["layers"], strict=True)]
        nb = bufs["normalizer"]
        norm = None if nb is None else DiagonalAffine(np.asarray(nb["shift"]), np.asarray(nb["scale"]))
        if arch["kind"] == "hint":
            tmap = HintMap(layers, arch["dim_y"], arch["dim_x"], kr_enforced=arch["kr_enforced"], normalizer=norm)
        elif arch["kind"] == "inn":
            tmap = InnMap(layers, normalizer=norm)
        else:
            raise CheckpointError(f"unknown map kind {arch['kind']!r}")
        saved = doc["params"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    params = tmap.params
    if len(saved) != len(params):
        raise CheckpointError(f"checkpoint holds {len(saved)} parameter arrays, architecture needs {len(params)}")
    for i, (p, s) in enumerate(zip(params, saved)):
        a = np.asarray(s, dtype=np.float64)
        if a.shape != p.shape:
            raise CheckpointError(f"parameter {i} has shape {a.shape}, architecture needs {p.shape}")
        p[...] = a
    return tmap, doc.get("metadata", {})


def checkpoint_id(doc):
    """Short content hash identifying a checkpoint's architecture and parameters."""
    key = json.dumps({k: doc[k] for k in ("architecture", "buffers", "params")}, sort_keys=True)
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def checkpoint_save(tmap, path, case=None, metadata=None):
    """Write ``tmap`` to ``path``; returns the checkpoint id."""
    doc = to_dict(tmap, case, metadata)
    doc["metadata"]["checkpoint_id"] = checkpoint_id(doc)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc), encoding="utf-8")
    tmp.replace(path)
    return doc["metadata"]["checkpoint_id"]


def checkpoint_load(path):
    """Read a checkpoint; returns ``(map, metadata)``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is corrupt or truncated: {exc}") from exc
    return from_dict(doc)
