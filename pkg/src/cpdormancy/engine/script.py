"""Text format for explicit clock traces.

One clock per line: ``kind id t1 t2 ...`` with ``kind`` one of ``rec``,
``sleep``, ``wake`` (``id`` a vertex) or ``inf_aa``, ``inf_ad``, ``inf_da``,
``inf_dd`` (``id`` an edge index or ``u-v``).  Blank lines and ``#``
comments are ignored; repeated lines for the same clock are merged.
"""
from __future__ import annotations

from pathlib import Path

from ..errors import ConfigInvalid, UnknownVertex
from ..topology import Topology
from .core import Script

SITE_KINDS = ("rec", "sleep", "wake")
EDGE_KINDS = ("inf_aa", "inf_ad", "inf_da", "inf_dd")


def _edge_id(token: str, top: Topology) -> int:
    if "-" in token:
        u, v = (int(s) for s in token.split("-", 1))
        try:
            return top.edge_index(u, v)
        except (KeyError, IndexError):
            raise UnknownVertex(f"no edge {token}") from None
    e = int(token)
    if not 0 <= e < top.n_edges:
        raise UnknownVertex(f"no edge {e}")
    return e


def parse_script(text: str, top: Topology, source: str = "<script>") -> Script:
    clocks: dict[tuple[str, int], list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        where = f"{source}:{lineno}"
        if len(parts) < 2:
            raise ConfigInvalid(where, "expected 'kind id t1 t2 ...'")
        kind, ident = parts[0], parts[1]
        try:
            if kind in SITE_KINDS:
                idx = int(ident)
                if not 0 <= idx < top.n:
                    raise UnknownVertex(idx)
            elif kind in EDGE_KINDS:
                idx = _edge_id(ident, top)
            else:
                raise ConfigInvalid(where, f"unknown clock kind {kind!r}")
            times = [float(s) for s in parts[2:]]
        except ValueError as exc:
            raise ConfigInvalid(where, str(exc)) from None
        if any(t < 0 for t in times):
            raise ConfigInvalid(where, "clock times must be nonnegative")
        clocks.setdefault((kind, idx), []).extend(times)
    return Script({k: tuple(sorted(v)) for k, v in clocks.items()})


def read_script(path, top: Topology) -> Script:
    p = Path(path)
    return parse_script(p.read_text(), top, str(p))


def format_script(script: Script, top: Topology) -> str:
    lines = []
    for (kind, idx), times in sorted(script.clocks.items()):
        ident = str(idx)
        if kind in EDGE_KINDS:
            u, v = top.edges[idx]
            ident = f"{u}-{v}"
        lines.append(" ".join([kind, ident, *(repr(t) for t in times)]))
    return "\n".join(lines) + "\n"
