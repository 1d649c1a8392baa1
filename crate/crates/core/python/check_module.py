"""Runs one generated module against its unit-test checks.

Usage: python3 -I check_module.py request.json

The request names the module file, its kind, the data to feed it and the
list of checks. The outcome goes to the result document named in the
request; the exit status is 0 whenever that document was written.
"""

import importlib.util
import json
import math
import sys
import traceback

SCHEMA_VERSION = 1
TRACE_LIMIT = 4000


class MissingCallable(Exception):
    pass


def load_module(path, name="candidate"):
    spec = importlib.util.spec_from_file_location(name, path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def to_list(x):
    if hasattr(x, "tolist"):
        x = x.tolist()
    if isinstance(x, tuple):
        x = list(x)
    if isinstance(x, list):
        return [to_list(v) for v in x]
    return x


def is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def shape_of(x):
    shape = []
    while isinstance(x, list):
        shape.append(len(x))
        if not x:
            break
        x = x[0]
    return shape


def rectangular(x, shape):
    if not shape:
        return not isinstance(x, list)
    if not isinstance(x, list) or len(x) != shape[0]:
        return False
    return all(rectangular(v, shape[1:]) for v in x)


def leaves(x):
    if isinstance(x, list):
        for v in x:
            yield from leaves(v)
    else:
        yield x


def trace():
    text = traceback.format_exc()
    return text[-TRACE_LIMIT:]


def require(obj, name, label, callables):
    ok = callable(getattr(obj, name, None))
    callables[label] = ok
    if not ok:
        raise MissingCallable(label)
    return getattr(obj, name)


def split_data(data, where):
    if not isinstance(data, dict) or "inputs" not in data or "outputs" not in data:
        raise TypeError(f"{where} must return a dict with 'inputs' and 'outputs' lists")
    inputs, outputs = to_list(data["inputs"]), to_list(data["outputs"])
    if not isinstance(inputs, list) or not isinstance(outputs, list):
        raise TypeError(f"{where}: 'inputs' and 'outputs' must be lists of tensors")
    return inputs, outputs


def head(tensors, n):
    return [t[:n] if isinstance(t, list) else t for t in tensors]


def label_of(row):
    if isinstance(row, list):
        return max(range(len(row)), key=lambda i: row[i])
    return int(row)


def reference_predictions(target, classes):
    """Model-shaped predictions derived from the targets: per-class scores
    peaked at the true label for classification, the targets otherwise."""
    if not classes:
        return target
    if classes == 1:
        return [[1.0] for _ in target]
    rest = 0.1 / (classes - 1)
    rows = []
    for row in target:
        label = min(max(label_of(row), 0), classes - 1)
        rows.append([0.9 if c == label else rest for c in range(classes)])
    return rows


def run_module(req, module, callables, scalars):
    kind = req["kind"]
    plan = req.get("plan") or {}
    hparams = req.get("hparams") or {}
    if kind == "data-preparation":
        prepare = require(module, "prepare", "prepare", callables)
        inputs, outputs = split_data(prepare(req["workspace"]), "prepare")
        return {"inputs": inputs, "outputs": outputs}
    if kind == "synthetic":
        generate = require(module, "generate", "generate", callables)
        data = generate(int(req.get("seed", 0)))
        inputs, outputs = split_data(data, "generate")
        if req.get("dump"):
            with open(req["dump"], "w") as fh:
                json.dump({"inputs": inputs, "outputs": outputs}, fh)
        return {"inputs": inputs, "outputs": outputs}
    with open(req["data"]) as fh:
        data = json.load(fh)
    batch = int(req.get("batch", 8))
    inputs, outputs = head(data["inputs"], batch), head(data["outputs"], batch)
    if kind == "modeling":
        build = require(module, "build_model", "build_model", callables)
        model = build(plan, dict(hparams))
        train_step = require(model, "train_step", "model.train_step", callables)
        forward = require(model, "forward", "model.forward", callables)
        scalars["loss"] = train_step(inputs, outputs, dict(hparams))
        predictions = to_list(forward(inputs))
        return {"inputs": inputs, "outputs": outputs, "predictions": predictions}
    if kind == "post-processing":
        post = require(module, "postprocess", "postprocess", callables)
        predictions = reference_predictions(outputs[0], req.get("classes"))
        final = to_list(post(predictions, plan))
        return {"inputs": inputs, "outputs": outputs, "predictions": predictions, "final": final}
    raise ValueError(f"unknown module kind {kind!r}")


def describe(ref):
    if ref["view"] in ("predictions", "final"):
        return ref["view"]
    return f"{ref['view']}[{ref['tensor']}]"


def resolve(views, ref):
    view = views.get(ref["view"])
    if view is None:
        raise LookupError(f"no {ref['view']} were produced")
    if ref["view"] in ("predictions", "final"):
        return view
    if ref["tensor"] >= len(view):
        raise LookupError(f"{describe(ref)} is missing ({len(view)} tensor(s) produced)")
    return view[ref["tensor"]]


def checked_shape(views, ref):
    tensor = resolve(views, ref)
    shape = shape_of(tensor)
    if not rectangular(tensor, shape):
        raise ValueError(f"{describe(ref)} is a ragged nested list")
    return tensor, shape


def axis_size(views, ref):
    _, shape = checked_shape(views, ref)
    if ref["axis"] >= len(shape):
        raise ValueError(f"{describe(ref)} has rank {len(shape)}, no axis {ref['axis']}")
    return shape[ref["axis"]]


def evaluate(check, views, callables, scalars):
    """Returns None on success, else a diagnostic string."""
    kind = check["check"]
    if kind == "callable":
        return None if callables.get(check["name"]) else f"{check['name']} is not defined or not callable"
    if kind == "scalar_finite":
        v = scalars.get(check["name"])
        if is_number(v) and math.isfinite(v):
            return None
        try:
            f = float(v)
        except (TypeError, ValueError):
            return f"{check['name']} must be a number, got {type(v).__name__}"
        return None if math.isfinite(f) else f"{check['name']} is not finite: {v!r}"
    if kind == "tensor_count":
        view = views.get(check["view"])
        n = len(view) if isinstance(view, list) else 0
        if n == check["count"]:
            return None
        return f"{check['view']}: expected {check['count']} tensor(s), got {n}"
    at = check.get("at")
    if kind == "rank":
        _, shape = checked_shape(views, at)
        if len(shape) == check["rank"]:
            return None
        return f"{describe(at)}: expected rank {check['rank']}, got {len(shape)} (shape {shape})"
    if kind == "dim_size":
        size = axis_size(views, at)
        if size == check["size"]:
            return None
        return f"{describe(at)} axis {at['axis']}: expected size {check['size']}, got {size}"
    if kind == "dim_range":
        size = axis_size(views, at)
        if check["lo"] <= size <= check["hi"]:
            return None
        return f"{describe(at)} axis {at['axis']}: size {size} outside [{check['lo']}, {check['hi']}]"
    if kind == "isomorphic":
        a, b = axis_size(views, check["a"]), axis_size(views, check["b"])
        if a == b:
            return None
        return (f"{describe(check['a'])} axis {check['a']['axis']} (size {a}) must match "
                f"{describe(check['b'])} axis {check['b']['axis']} (size {b})")
    tensor, _ = checked_shape(views, at)
    values = list(leaves(tensor))
    if kind == "dtype":
        if check["dtype"] == "int":
            bad = [v for v in values if not (isinstance(v, int) and not isinstance(v, bool))]
        else:
            bad = [v for v in values if not is_number(v)]
        if not bad:
            return None
        return f"{describe(at)}: expected {check['dtype']} elements, found {bad[0]!r}"
    if kind == "finite":
        bad = [v for v in values if not (is_number(v) and math.isfinite(v))]
        return None if not bad else f"{describe(at)}: non-finite or non-numeric element {bad[0]!r}"
    if kind == "value_range":
        bad = [v for v in values if not (is_number(v) and check["lo"] <= v <= check["hi"])]
        if not bad:
            return None
        return f"{describe(at)}: element {bad[0]!r} outside [{check['lo']}, {check['hi']}]"
    if kind == "probability_rows":
        rows = tensor if isinstance(tensor, list) else []
        for i, row in enumerate(rows):
            row = row if isinstance(row, list) else [row]
            if any(not is_number(v) or v < -1e-6 or v > 1 + 1e-6 for v in row):
                return f"{describe(at)} row {i}: entries must lie in [0, 1]"
            if abs(sum(row) - 1.0) > 1e-4:
                return f"{describe(at)} row {i}: sums to {sum(row):.6f}, expected 1"
        return None
    return f"unknown check kind {kind!r}"


def main(argv):
    with open(argv[1]) as fh:
        req = json.load(fh)
    result = {"schema_version": SCHEMA_VERSION, "phase": None, "passed": False,
              "checks": {}, "diagnostics": ""}
    callables, scalars, views = {}, {}, None
    try:
        module = load_module(req["module"])
    except BaseException:
        result["phase"] = "syntax"
        result["diagnostics"] = trace()
    else:
        try:
            views = run_module(req, module, callables, scalars)
        except MissingCallable as missing:
            result["phase"] = "contract"
            result["diagnostics"] = f"{missing} is not defined or not callable"
        except BaseException:
            result["phase"] = "execution"
            result["diagnostics"] = trace()
    if views is not None:
        failures = []
        for check in req.get("checks", []):
            try:
                problem = evaluate(check, views, callables, scalars)
            except (LookupError, ValueError, TypeError) as exc:
                problem = str(exc)
            result["checks"][check["name"]] = {"passed": problem is None, "diagnostics": problem or ""}
            if problem is not None:
                failures.append(f"{check['name']}: {problem}")
        if failures:
            result["phase"] = "contract"
            result["diagnostics"] = "\n".join(failures)
        else:
            result["passed"] = True
    with open(req.get("result", "result.json"), "w") as fh:
        json.dump(result, fh, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
