"""JSON model files for trees and forests.

Models embed their training sample because predictions refit the terminal
node (or forest-weighted) estimator on it. Floats round-trip exactly through
Python's shortest-repr JSON encoding.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .cif import ForestConfig, ForestModel
from .cit import Node, SplitRule, TreeConfig, TreeModel
from .dataset import Covariate, Dataset, SchemaMismatchError
from .estimators import Backend, EmConfig

FORMAT_VERSION = "1.0"


class ModelFormatError(ValueError):
    """Unreadable, truncated or incompatible model file."""


def _config_dict(cfg) -> dict:
    out = asdict(cfg)
    for k, v in out.items():
        if isinstance(v, Backend):
            out[k] = v.value
    return out


def _tree_config(obj: dict) -> TreeConfig:
    obj = dict(obj)
    obj["em"] = EmConfig(**obj["em"])
    return TreeConfig(**obj)


def _forest_config(obj: dict) -> ForestConfig:
    obj = dict(obj)
    obj["em"] = EmConfig(**obj["em"])
    return ForestConfig(**obj)


def _data_dict(ds: Dataset) -> dict:
    return {"a": ds.a.tolist(), "z": ds.z.tolist(), "delta": ds.delta.tolist(),
            "x": ds.x.tolist()}


def _data_from(obj: dict, schema) -> Dataset:
    m = len(schema)
    x = np.asarray(obj["x"], dtype=np.float64).reshape(len(obj["a"]), m)
    return Dataset(np.asarray(obj["a"]), np.asarray(obj["z"]), np.asarray(obj["delta"]), x, schema)


def _nodes_list(tree: TreeModel) -> list:
    out = []
    for nd in tree.nodes:
        item = {"id": nd.id, "depth": nd.depth, "p_value": None if np.isnan(nd.p_value) else nd.p_value}
        if nd.is_terminal:
            item["terminal_members"] = nd.members.tolist()
            if nd.flag:
                item["flag"] = nd.flag
        else:
            s = nd.split
            item["split"] = {"var": s.var, "cut": s.cut} if s.subset is None else \
                {"var": s.var, "subset": list(s.subset)}
            item["children"] = list(nd.children)
            item["members"] = nd.members.tolist()
        out.append(item)
    return out


def _nodes_from(items: list) -> list:
    nodes = []
    for item in items:
        p = item.get("p_value")
        node = Node(int(item["id"]), int(item["depth"]),
                    np.asarray(item.get("terminal_members", item.get("members", [])), dtype=np.int64),
                    p_value=float("nan") if p is None else float(p), flag=item.get("flag"))
        if "split" in item:
            s = item["split"]
            node.split = SplitRule(int(s["var"]), s.get("cut"),
                                   None if s.get("subset") is None else tuple(s["subset"]))
            node.children = tuple(item["children"])
        nodes.append(node)
    return nodes


def model_to_dict(model) -> dict:
    if isinstance(model, TreeModel):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "tree",
            "config": _config_dict(model.config),
            "nodes": _nodes_list(model),
            "schema": [c.to_json() for c in model.data.schema],
            "data": _data_dict(model.data),
        }
    if isinstance(model, ForestModel):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "forest",
            "config": _config_dict(model.config),
            "tree_config": _config_dict(model.tree_config),
            "trees": [{"nodes": _nodes_list(t)} for t in model.trees],
            "inbag": model.inbag.tolist(),
            "schema": [c.to_json() for c in model.data.schema],
            "data": _data_dict(model.data),
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(obj: dict):
    version = str(obj.get("format_version", ""))
    if version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise ModelFormatError(f"unsupported model format version {version!r}")
    try:
        schema = tuple(Covariate.from_json(c) for c in obj["schema"])
        ds = _data_from(obj["data"], schema)
        if obj["kind"] == "tree":
            return TreeModel(_nodes_from(obj["nodes"]), _tree_config(obj["config"]), ds)
        if obj["kind"] == "forest":
            tc = _tree_config(obj["tree_config"])
            trees = [TreeModel(_nodes_from(t["nodes"]), tc, ds) for t in obj["trees"]]
            return ForestModel(trees, np.asarray(obj["inbag"], dtype=np.float64),
                               _forest_config(obj["config"]), tc, ds)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model: {exc}") from exc
    raise ModelFormatError(f"unknown model kind {obj.get('kind')!r}")


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    return model_from_dict(obj)


def check_schema(model, ds: Dataset) -> None:
    """Refuse prediction data whose schema differs from the training schema."""
    if tuple(model.data.schema) != tuple(ds.schema):
        raise SchemaMismatchError("prediction data schema differs from the model's")
