#!/usr/bin/env python3
"""Conformance stub for the external executor protocol.

Usage: stub_executor.py MODE [ARG]
  metrics      fixed metrics for every criterion in the request
  predictions  last-value forecasts written to a file, scored by the engine
  sleep        sleeps ARG seconds before answering
  fail         writes "boom" to stderr and exits 1
  garbage      prints something that is not JSON
  error        answers status "error" with a message
  extra        answers with an unknown field
  capture      copies the request to ARG, then behaves like metrics
"""
import json
import os
import sys
import tempfile
import time


def metrics_response(req):
    values = {c: 1.5 for c in req["task"]["criteria"]}
    return {"v": 1, "status": "success", "metrics": values}


def predictions_response(req):
    test = req["data"]["test"]["values"]
    p = req["task"]["window"]["p"]
    q = req["task"]["window"]["q"]
    stride = req["task"]["window"].get("stride", 1)
    blocks = []
    start = 0
    while start + p + q <= len(test):
        last = test[start + p - 1]
        blocks.append([list(last) for _ in range(q)])
        start += stride
    fd, path = tempfile.mkstemp(suffix=".json")
    with os.fdopen(fd, "w") as f:
        json.dump({"predictions": blocks}, f)
    return {"v": 1, "status": "success", "predictions_path": path}


def main():
    mode = sys.argv[1]
    req = json.loads(sys.stdin.read())
    if mode == "fail":
        sys.stderr.write("boom\n")
        sys.exit(1)
    if mode == "sleep":
        time.sleep(float(sys.argv[2]))
        print(json.dumps(metrics_response(req)))
        return
    if mode == "garbage":
        print("this is not json")
        return
    if mode == "error":
        print(json.dumps({"v": 1, "status": "error", "message": "model refused: " + req["config"]["model_id"]}))
        return
    if mode == "extra":
        out = metrics_response(req)
        out["surprise"] = True
        print(json.dumps(out))
        return
    if mode == "capture":
        with open(sys.argv[2], "w") as f:
            json.dump(req, f)
        print(json.dumps(metrics_response(req)))
        return
    if mode == "predictions":
        print(json.dumps(predictions_response(req)))
        return
    print(json.dumps(metrics_response(req)))


if __name__ == "__main__":
    main()
