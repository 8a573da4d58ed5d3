"""MDP files, CSV/JSON writers.

MDP file schema (JSON)::

    {
      "num_states": S, "num_actions": A, "gamma": g,
      "reward": [S*A numbers, row-major (s, a)],
      "transition": [[S numbers] x (S*A)],   # row s*A + a
      "mu": [S numbers],
      "r_max": 1.0                           # optional
    }
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .mdp import MdpValidationError, TabularMdp


def mdp_to_dict(mdp: TabularMdp) -> dict:
    S, A = mdp.num_states, mdp.num_actions
    return {
        "num_states": S,
        "num_actions": A,
        "gamma": mdp.discount,
        "reward": mdp.reward.reshape(-1).tolist(),
        "transition": mdp.transition.reshape(S * A, S).tolist(),
        "mu": mdp.mu.tolist(),
        "r_max": mdp.r_max,
    }


def mdp_from_dict(doc: dict) -> TabularMdp:
    for key in ("num_states", "num_actions", "gamma", "reward", "transition", "mu"):
        if key not in doc:
            raise MdpValidationError(f"missing field {key!r}")
    S, A = doc["num_states"], doc["num_actions"]
    if not (isinstance(S, int) and isinstance(A, int) and S >= 1 and A >= 1):
        raise MdpValidationError("num_states and num_actions must be positive integers")
    reward = np.asarray(doc["reward"], dtype=float)
    if reward.size != S * A:
        raise MdpValidationError(f"reward has {reward.size} entries, expected {S * A}")
    rows = doc["transition"]
    if len(rows) != S * A:
        raise MdpValidationError(f"transition has {len(rows)} rows, expected {S * A}")
    for i, row in enumerate(rows):
        if len(row) != S:
            raise MdpValidationError(f"transition row {i} (s={i // A}, a={i % A}) has {len(row)} entries, expected {S}")
    mu = np.asarray(doc["mu"], dtype=float)
    return TabularMdp(np.asarray(rows, dtype=float).reshape(S, A, S), reward.reshape(S, A),
                      float(doc["gamma"]), mu, float(doc.get("r_max", 1.0)))


def save_mdp(mdp: TabularMdp, path):
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=1) + "\n", encoding="utf-8")


def load_mdp(path) -> TabularMdp:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise MdpValidationError(f"cannot read MDP file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MdpValidationError(f"{path}: not valid JSON ({exc})") from exc
    return mdp_from_dict(doc)


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def write_csv(path, rows, columns=None):
    """Header row plus one line per record; UTF-8 with LF endings."""
    rows = list(rows)
    if columns is None:
        columns = []
        for row in rows:
            for k in row:
                if k not in columns:
                    columns.append(k)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, default=_default) + "\n", encoding="utf-8")


def _default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")
