"""Controller schedules for the seven dataflows.

Conventions for an ``R x C`` array with tile depth ``T`` (``ArchConfig.depth``):

* OS and WS weight tiles are ``R x T`` blocks of ``W``. IS weight tiles are
  ``T x R`` blocks streamed one weight row at a time, so they are encoded
  transposed and their "columns" are weight rows.
* Only the valid extent of an edge tile is scheduled; padding costs nothing.
* A *phase* is one load step followed by a skewed wavefront over the active
  PE block (PE ``(r, c)`` fires ``r + c`` steps after the load). Results
  leaving the array are written on the wavefront's last step. Consecutive
  phases do not overlap.

Every PE MAC rounds to float32, so results are computed as float32 MAC
chains in exactly the order the schedule feeds them.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..formats import CSB_SENTINEL, encode_csb, encode_two_stage_bitmap
from .config import ArchConfig
from .controller import Controller

# word addresses of the three memory regions; weights start at 0
XBASE = 1 << 32
OBASE = 2 << 32


def _spans(total: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(size, total - s)) for s in range(0, total, size)]


def _mac_chain(acc: np.ndarray, prods: np.ndarray) -> np.ndarray:
    """``acc + prods[0] + prods[1] + ...`` with every addition rounded to float32 in order."""
    if len(prods) == 0:
        return acc
    stacked = np.concatenate((acc[None], prods.astype(np.float32, copy=False)))
    return np.add.accumulate(stacked, axis=0, dtype=np.float32)[-1]


@dataclass
class _Tile:
    """One weight tile as the controller sees it (block is ``P x Q``, streamed by column)."""

    block: np.ndarray
    origin: tuple[int, int]
    transposed: bool
    base: int
    cols: list = field(default_factory=list)
    words: list = field(default_factory=list)
    meta: int = 0
    sparse: bool = False

    def logical(self, r: int, q: int) -> tuple[int, int]:
        m0, k0 = self.origin
        return (m0 + q, k0 + r) if self.transposed else (m0 + r, k0 + q)

    def meta_reqs(self) -> list:
        return [("DecU", "read", self.base + i) for i in range(self.meta)]

    def column_reqs(self, ci: int) -> list:
        """Per-PE-row weight reads for streamed column ``ci``; DecU answers zeros."""
        q = self.cols[ci]
        col = self.block[:, q]
        reqs = []
        if self.sparse:
            addr = self.base + self.meta + sum(self.words[:ci])
            for r in range(col.size):
                if col[r] != 0:
                    reqs.append((f"LU_L{r}", "read", addr))
                    addr += 1
                else:
                    m, k = self.logical(r, q)
                    reqs.append(("DecU", "zero", f"W[{m},{k}]"))
        else:
            p = self.block.shape[0]
            reqs = [(f"LU_L{r}", "read", self.base + q * p + r) for r in range(p)]
        return reqs


def _weight_tiles(w: np.ndarray, tr: int, tc: int, sparse: bool, transpose: bool) -> dict:
    tiles = {}
    addr = 0
    for i, (m0, mv) in enumerate(_spans(w.shape[0], tr)):
        for j, (k0, kv) in enumerate(_spans(w.shape[1], tc)):
            blk = w[m0:m0 + mv, k0:k0 + kv]
            blk = np.ascontiguousarray(blk.T if transpose else blk)
            t = _Tile(blk, (m0, k0), transpose, addr, sparse=sparse)
            if sparse:
                enc = encode_two_stage_bitmap(blk)
                counts = np.count_nonzero(blk, axis=0)
                t.cols = [int(c) for c in enc.nonzero_columns]
                t.words = [int(counts[c]) for c in t.cols]
                t.meta = enc.metadata_words
                addr += enc.data_words
            else:
                t.cols = list(range(blk.shape[1]))
                t.words = [blk.shape[0]] * blk.shape[1]
                addr += blk.size
            tiles[i, j] = t
    return tiles


def _input_reqs(ks, n, n_total: int, unit="LU_T") -> list:
    return [(f"{unit}{c}", "read", XBASE + k * n_total + n) for c, k in enumerate(ks)]


def _zero_fill(ctl: Controller, touched: np.ndarray, words_per_cell, cells) -> None:
    """Write every output that no phase produced.

    The store units emit these zeros without involving the array, so they
    ride on the final step; a step of their own is needed only when nothing
    ran yet or parked metadata still has to be read.
    """
    words = int(sum(words_per_cell(c) for c in cells if not touched[c]))
    if not words:
        return
    reqs = ()
    if ctl.tracing:
        reqs = [("SU_B0", "write", a) for c in cells if not touched[c] for a in words_per_cell(c, addrs=True)]
    if ctl.res.steps and not ctl.pending_meta:
        ctl.add_to_last_step(o=words, reqs=reqs)
    else:
        ctl.step(o=words, reqs=reqs)


# ---------------------------------------------------------------------------
# output stationary


def run_os(ctl: Controller, arch: ArchConfig, w, x, out, sparse: bool) -> None:
    R, C, T = arch.pe_rows, arch.pe_cols, arch.depth
    N = x.shape[1]
    tiles = _weight_tiles(w, R, T, sparse, transpose=False)
    kspans = _spans(w.shape[1], T)
    tr = ctl.tracing
    for i, (m0, rv) in enumerate(_spans(w.shape[0], R)):
        for n0, cv in _spans(N, C):
            acc = np.zeros((rv, cv), dtype=np.float32)
            phases = 0
            for j, (k0, _) in enumerate(kspans):
                t = tiles[i, j]
                if sparse:
                    ctl.park_metadata(t.meta, t.meta_reqs() if tr else ())
                if not t.cols:
                    continue
                if tr:
                    for ci, q in enumerate(t.cols):
                        reqs = t.column_reqs(ci) + [
                            (f"LU_T{c}", "read", XBASE + (k0 + q) * N + n0 + c) for c in range(cv)
                        ]
                        ctl.phase(w=t.words[ci], x=cv, zeros=rv - t.words[ci], rows=rv, cols=cv, reqs=reqs)
                else:
                    first = t.words[0]
                    ctl.phase(w=first, x=cv, zeros=rv - first, rows=rv, cols=cv)
                    for wv, cnt in Counter(t.words[1:]).items():
                        ctl.phase(w=wv, x=cv, zeros=rv - wv, rows=rv, cols=cv, count=cnt)
                cols = t.cols
                prods = t.block[:, cols].T[:, :, None] * x[k0 + np.asarray(cols), n0:n0 + cv][:, None, :]
                acc = _mac_chain(acc, prods)
                phases += len(cols)
            ctl.res.weight_load_phases += phases
            out[m0:m0 + rv, n0:n0 + cv] = acc
            oreqs = ()
            if tr:
                oreqs = [(f"SU_B{c}", "write", OBASE + (m0 + r) * N + n0 + c) for r in range(rv) for c in range(cv)]
            if phases:
                ctl.add_to_last_step(o=rv * cv, reqs=oreqs)
            else:
                # nothing to compute: the tile's outputs are zeros
                ctl.step(o=rv * cv, reqs=oreqs)


# ---------------------------------------------------------------------------
# weight stationary


def run_ws(ctl: Controller, arch: ArchConfig, w, x, out, sparse: bool) -> None:
    R, C, T = arch.pe_rows, arch.pe_cols, arch.depth
    N = x.shape[1]
    tiles = _weight_tiles(w, R, T, sparse, transpose=False)
    mspans = _spans(w.shape[0], R)
    touched = np.zeros((len(mspans), N), dtype=bool)
    tr = ctl.tracing
    for i, (m0, rv) in enumerate(mspans):
        for j, (k0, _) in enumerate(_spans(w.shape[1], T)):
            t = tiles[i, j]
            if sparse:
                ctl.park_metadata(t.meta, t.meta_reqs() if tr else ())
            for g0 in range(0, len(t.cols), C):
                grp = range(g0, min(g0 + C, len(t.cols)))
                g = len(grp)
                gw = sum(t.words[ci] for ci in grp)
                zeros = rv * g - gw
                ctl.res.weight_load_phases += 1
                if tr:
                    wreqs = [r for ci in grp for r in t.column_reqs(ci)]
                    ks = [k0 + t.cols[ci] for ci in grp]
                    for n in range(N):
                        p = rv if touched[i, n] else 0
                        reqs = (wreqs if n == 0 else []) + _input_reqs(ks, n, N)
                        if p:
                            reqs += [(f"LU_L{r}", "read", OBASE + (m0 + r) * N + n) for r in range(rv)]
                        oreqs = [(f"SU_R{r}", "write", OBASE + (m0 + r) * N + n) for r in range(rv)]
                        ctl.phase(w=gw if n == 0 else 0, x=g, p=p, zeros=zeros if n == 0 else 0,
                                  rows=rv, cols=g, o=rv, reqs=reqs, out_reqs=oreqs)
                        touched[i, n] = True
                else:
                    ctl.phase(w=gw, x=g, p=rv if touched[i, 0] else 0, zeros=zeros, rows=rv, cols=g, o=rv)
                    hot = int(np.count_nonzero(touched[i, 1:]))
                    ctl.phase(x=g, p=rv, rows=rv, cols=g, o=rv, count=hot)
                    ctl.phase(x=g, rows=rv, cols=g, o=rv, count=N - 1 - hot)
                    touched[i, :] = True
            if t.cols:
                cols = np.asarray(t.cols)
                prods = t.block[:, cols].T[:, :, None] * x[k0 + cols, :][:, None, :]
                out[m0:m0 + rv, :] = _mac_chain(out[m0:m0 + rv, :], prods)

    def cell_words(cell, addrs=False):
        i, n = cell
        m0, rv = mspans[i]
        return [OBASE + (m0 + r) * N + n for r in range(rv)] if addrs else rv

    _zero_fill(ctl, touched, cell_words, [(i, n) for i in range(len(mspans)) for n in range(N)])


# ---------------------------------------------------------------------------
# input stationary


def run_is(ctl: Controller, arch: ArchConfig, w, x, out, sparse: bool) -> None:
    R, C, T = arch.pe_rows, arch.pe_cols, arch.depth
    M, N = w.shape[0], x.shape[1]
    tiles = _weight_tiles(w, T, R, sparse, transpose=True)
    mspans = _spans(M, T)
    nspans = _spans(N, C)
    touched = np.zeros((M, len(nspans)), dtype=bool)
    tr = ctl.tracing
    for j, (k0, kv) in enumerate(_spans(w.shape[1], R)):
        for jn, (n0, cv) in enumerate(nspans):
            xt = x[k0:k0 + kv, n0:n0 + cv]
            loaded = False
            for i, (m0, _) in enumerate(mspans):
                t = tiles[i, j]
                if sparse:
                    ctl.park_metadata(t.meta, t.meta_reqs() if tr else ())
                if not t.cols:
                    continue
                rows = [m0 + q for q in t.cols]
                if tr:
                    for ci, m in enumerate(rows):
                        reqs = t.column_reqs(ci)
                        xw = 0
                        if not loaded:
                            xw = kv * cv
                            reqs += [(f"LU_T{c}", "read", XBASE + (k0 + r) * N + n0 + c)
                                     for r in range(kv) for c in range(cv)]
                        p = cv if touched[m, jn] else 0
                        if p:
                            reqs += [(f"LU_T{c}", "read", OBASE + m * N + n0 + c) for c in range(cv)]
                        oreqs = [(f"SU_B{c}", "write", OBASE + m * N + n0 + c) for c in range(cv)]
                        ctl.phase(w=t.words[ci], x=xw, p=p, zeros=kv - t.words[ci], rows=kv, cols=cv,
                                  o=cv, reqs=reqs, out_reqs=oreqs)
                        loaded = True
                        touched[m, jn] = True
                else:
                    first = t.words[0]
                    ctl.phase(w=first, x=0 if loaded else kv * cv, p=cv if touched[rows[0], jn] else 0,
                              zeros=kv - first, rows=kv, cols=cv, o=cv)
                    loaded = True
                    rest = Counter((t.words[ci], bool(touched[rows[ci], jn])) for ci in range(1, len(rows)))
                    for (wv, hot), cnt in rest.items():
                        ctl.phase(w=wv, p=cv if hot else 0, zeros=kv - wv, rows=kv, cols=cv, o=cv, count=cnt)
                    touched[rows, jn] = True
                prods = t.block[:, t.cols][:, :, None] * xt[:, None, :]
                out[rows, n0:n0 + cv] = _mac_chain(out[rows, n0:n0 + cv], prods)
                ctl.res.weight_load_phases += len(rows)

    def cell_words(cell, addrs=False):
        m, jn = cell
        n0, cv = nspans[jn]
        return [OBASE + m * N + n0 + c for c in range(cv)] if addrs else cv

    _zero_fill(ctl, touched, cell_words, [(m, jn) for m in range(M) for jn in range(len(nspans))])


# ---------------------------------------------------------------------------
# compressed-sparse-block output stationary


def csos_injections(col_index: np.ndarray) -> list[tuple[int, int, list[int]]]:
    """Input-row injections needed to finish one merged weight column.

    Each injection carries input row ``k`` (the column index of the topmost
    unfinished live PE row) from PE row 0 down to the bottommost unfinished
    row. Rows whose index matches compute and finish; sentinel rows finish
    when visited; other rows wait for a later injection. Returns
    ``(k, length_in_steps, computing_rows)`` per injection.
    """
    done = np.zeros(col_index.size, dtype=bool)
    out = []
    while True:
        live = np.flatnonzero(~done & (col_index != CSB_SENTINEL))
        if live.size == 0:
            return out
        k = int(col_index[live[0]])
        bottom = int(np.flatnonzero(~done)[-1])
        rows = [r for r in range(bottom + 1) if not done[r] and col_index[r] == k]
        done[: bottom + 1] |= (col_index[: bottom + 1] == k) | (col_index[: bottom + 1] == CSB_SENTINEL)
        out.append((k, bottom + 1, rows))


def run_csos(ctl: Controller, arch: ArchConfig, w, x, out, sparse: bool = True) -> None:
    R, C, T = arch.pe_rows, arch.pe_cols, arch.depth
    N = x.shape[1]
    tiles = {}
    addr = 0
    kspans = _spans(w.shape[1], T)
    mspans = _spans(w.shape[0], R)
    for i, (m0, rv) in enumerate(mspans):
        for j, (k0, kv) in enumerate(kspans):
            enc = encode_csb(w[m0:m0 + rv, k0:k0 + kv])
            plans = [csos_injections(enc.merged_column(g)[1]) for g in range(enc.merged_col_count)]
            tiles[i, j] = (enc, addr, plans)
            addr += enc.data_words
    tr = ctl.tracing
    res = ctl.res
    for i, (m0, rv) in enumerate(mspans):
        for n0, cv in _spans(N, C):
            acc = np.zeros((rv, cv), dtype=np.float32)
            phases = 0
            for j, (k0, _) in enumerate(kspans):
                enc, base, plans = tiles[i, j]
                ctl.park_metadata(1, [("DecU", "read", base)] if tr else ())
                iw = enc.index_words_per_column
                vaddr = base + 1
                for g in range(enc.merged_col_count):
                    vals, idx = enc.merged_column(g)
                    live = idx != CSB_SENTINEL
                    nl = int(np.count_nonzero(live))
                    reqs = ()
                    if tr:
                        reqs = [("DecU", "read", vaddr + nl + q) for q in range(iw)]
                        for r in range(rv):
                            if live[r]:
                                reqs.append((f"LU_L{r}", "read", vaddr))
                                vaddr += 1
                            else:
                                reqs.append(("DecU", "zero", f"slot[{g},{r}]"))
                        vaddr += iw
                    ctl.step(w=nl + iw, zeros=rv - nl, reqs=reqs)
                    plan = plans[g]
                    span = sum(length for _, length, _ in plan) + cv - 1
                    if tr:
                        xs: dict[int, int] = {}
                        pes: list[list] = [[] for _ in range(span)]
                        s = 0
                        for k, length, rows in plan:
                            xs[s] = k0 + k
                            for r in rows:
                                for c in range(cv):
                                    pes[s + r + c].append((r, c))
                            s += length
                        for off in range(span):
                            sreqs = ()
                            if off in xs:
                                sreqs = [(f"LU_T{c}", "read", XBASE + xs[off] * N + n0 + c) for c in range(cv)]
                            ctl.step(x=cv if off in xs else 0, macs=len(pes[off]), reqs=sreqs, pes=pes[off])
                    else:
                        inj = len(plan)
                        # a final one-row injection on a one-column block reads on the last step
                        last = cv if plan[-1][1] == 1 and cv == 1 else 0
                        ctl.bulk(steps=span, cycles=inj * ctl.cost(cv) + span - inj, last_words=last,
                                 input_words_read=inj * cv, mac_ops=nl * cv)
                    src = x[k0 + np.where(live, idx, 0), n0:n0 + cv]
                    prod = np.where(live[:, None], vals[:, None] * src, np.float32(0))
                    acc = _mac_chain(acc, prod[None])
                    phases += 1
            res.weight_load_phases += phases
            out[m0:m0 + rv, n0:n0 + cv] = acc
            oreqs = ()
            if tr:
                oreqs = [(f"SU_B{c}", "write", OBASE + (m0 + r) * N + n0 + c) for r in range(rv) for c in range(cv)]
            if phases:
                ctl.add_to_last_step(o=rv * cv, reqs=oreqs)
            else:
                ctl.step(o=rv * cv, reqs=oreqs)
