import csv
import json
import logging
import math
import sys

import numpy as np

from src.core.calibration import CapParams
from src.core.ode import TRACE_COLUMNS, trace_rows

logger = logging.getLogger(__name__)


def sanitize(value):
    """Plain-Python copy of a payload with numpy scalars unwrapped and inf/nan as None."""
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return [sanitize(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dumps(payload):
    return json.dumps(sanitize(payload), indent=2, allow_nan=False) + "\n"


def write_json(payload, path=None, stream=None):
    text = dumps(payload)
    if path:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        logger.info("wrote %s", path)
    else:
        (stream or sys.stdout).write(text)
    return text


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def read_params(path):
    return CapParams.from_dict(read_json(path))


def write_trace_csv(trace, s_upper=None, path=None, stream=None):
    """One row per integrator sample with header s,y,dy,z,dz,x,dx,rho,H1,H2."""
    rows = trace_rows(trace, s_upper)
    if path:
        with open(path, 'w', encoding='utf-8', newline='') as f:
            _write_rows(f, rows)
        logger.info("wrote %d trace rows to %s", len(rows), path)
    else:
        _write_rows(stream or sys.stdout, rows)
    return len(rows)


def _write_rows(handle, rows):
    writer = csv.writer(handle, lineterminator='\n')
    writer.writerow(TRACE_COLUMNS)
    writer.writerows(rows)


def read_trace_csv(path):
    """Columns of a trace CSV as float arrays keyed by header name."""
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        values = np.array([[float(v) for v in row] for row in reader])
    return {name: values[:, i] for i, name in enumerate(header)}
