#!/usr/bin/env python3
"""Reference worker for the subprocess flow protocol.

Serves inverse evaluations of an affine conditional flow over
newline-delimited JSON on stdin/stdout, one record per line:

    request:  {"x": [x0, ..., x_{p-1}], "y": [y0, ..., y_{d-1}]}
    response: {"z": [z0, ..., z_{d-1}], "inverse_log_det": <float>}

The flow served here is y = mean + scale @ z with mean and
lower-triangular scale read from a JSON file passed as the only
argument:

    {"mean": [..d floats..], "scale": [[..d x d lower-triangular..]]}

Adapt the body to wrap any real model: read x and y, produce the latent
vector and the log |det| of the inverse Jacobian at (x, y).
"""

import json
import sys

import numpy as np


def main():
    if len(sys.argv) != 2:
        print("usage: external_flow_worker.py FLOW_SPEC_JSON", file=sys.stderr)
        return 2
    with open(sys.argv[1], encoding="utf-8") as handle:
        spec = json.load(handle)
    mean = np.asarray(spec["mean"], dtype=float)
    scale = np.asarray(spec["scale"], dtype=float)
    inverse = np.linalg.inv(scale)
    log_det = -float(np.sum(np.log(np.diag(scale))))

    for line in sys.stdin:
        if not line.strip():
            continue
        request = json.loads(line)
        y = np.asarray(request["y"], dtype=float)
        z = inverse @ (y - mean)
        print(json.dumps({"z": z.tolist(), "inverse_log_det": log_det}))
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
