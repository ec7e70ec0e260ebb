"""Text formats with lossless doubles (17 significant digits).

JSON output follows the standard library's dialect, including the
``Infinity``/``NaN`` literals it reads back, but floats are always printed
with 17 significant digits so that parse-then-emit reproduces a file
byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable, Sequence

import numpy as np


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return 'NaN'
    if math.isinf(x):
        return 'Infinity' if x > 0 else '-Infinity'
    return format(x, '.17g')


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = '\n' + ' ' * (indent * (level + 1)) if indent else ''
    close = '\n' + ' ' * (indent * level) if indent else ''
    sep = ',' + pad if indent else ', '
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return '{}'
        items = [json.dumps(str(k)) + ': ' + _encode(v, indent, level + 1) for k, v in obj.items()]
        return '{' + pad + sep.join(items) + close + '}'
    if isinstance(obj, (list, tuple)):
        if not obj:
            return '[]'
        # Numeric vectors stay on one line.
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
               for v in obj):
            return '[' + ', '.join(_encode(v, 0, 0) for v in obj) + ']'
        return '[' + pad + sep.join(_encode(v, indent, level + 1) for v in obj) + close + ']'
    raise TypeError(f'cannot serialize {type(obj).__name__}')


def dumps_json(obj: Any, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + '\n'


def loads_json(text: str) -> Any:
    return json.loads(text)


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    return buf.getvalue()


def loads_csv(text: str):
    """Returns (header, rows); numeric-looking cells become floats."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = []
    for row in reader:
        parsed = []
        for cell in row:
            try:
                parsed.append(float(cell))
            except ValueError:
                parsed.append(cell)
        rows.append(parsed)
    return header, rows
