"""Entry script of an assembled program.

Usage: python3 -I main.py config.json

Wires data preparation -> modeling -> training/evaluation -> post-processing
and writes a result document with the score and the stages that completed.
"""

import importlib.util
import json
import os
import sys
import traceback

HERE = os.path.dirname(os.path.abspath(__file__))
STAGES = ("data-preparation", "modeling", "post-processing")


def load(name):
    spec = importlib.util.spec_from_file_location(name, os.path.join(HERE, name + ".py"))
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def mark(result, stage):
    result["markers"].append(stage)
    print(f"STAGE {stage} ok", flush=True)


def run(cfg, result):
    harness = load("harness")
    with open(os.path.join(HERE, cfg.get("plan", "plan.json"))) as fh:
        plan = json.load(fh)

    data_preparation = load("data_preparation")
    inputs, outputs = harness.as_tensors(data_preparation.prepare(cfg["workspace"]))
    mark(result, "data-preparation")

    modeling = load("modeling")
    post_processing = load("post_processing")
    model = modeling.build_model(plan, dict(cfg.get("hparams", {})))
    outcome = harness.fit(model, post_processing.postprocess, plan, inputs, outputs, cfg)
    result["epochs_run"] = outcome["epochs_run"]
    if outcome["status"] != "evaluated":
        result["status"] = outcome["status"]
        result["reason"] = outcome.get("reason", "")
        return
    mark(result, "modeling")
    # fit scored the validation split through postprocess, so the last
    # stage has run end to end.
    mark(result, "post-processing")
    result["score"] = outcome["score"]
    result["status"] = "evaluated"


def main(argv):
    with open(argv[1]) as fh:
        cfg = json.load(fh)
    result = {"schema_version": 1, "status": "failed", "score": None, "markers": [],
              "epochs_run": 0, "metric": cfg.get("metric")}
    code = 0
    try:
        run(cfg, result)
    except BaseException:
        result["status"] = "failed"
        result["error"] = traceback.format_exc()[-4000:]
        traceback.print_exc()
        code = 1
    with open(cfg.get("result", "result.json"), "w") as fh:
        json.dump(result, fh, sort_keys=True)
    return code


if __name__ == "__main__":
    sys.exit(main(sys.argv))
