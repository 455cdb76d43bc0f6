"""Global controller: step/cycle accounting under the memory-port budget.

Every controller step advances all PEs, load units and store units at once.
A step costs one cycle when its memory words fit the port budget and
``ceil(words / words_per_cycle)`` cycles otherwise. Units competing in a
stalled step are granted round-robin; the rotation pointer advances every
step so no unit is favoured.
"""

from __future__ import annotations

from .config import ArchConfig, SimResult, TraceEvent


class Controller:
    """Accumulates a :class:`SimResult`; optionally records a per-unit trace.

    Requests passed in ``reqs`` are ``(unit, action, address)`` triples with
    action ``"read"``, ``"write"`` or ``"zero"`` (a DecU zero emission, which
    uses no port slot). They are only consulted when tracing.
    """

    def __init__(self, arch: ArchConfig, trace: bool = False):
        self.cap = arch.words_per_cycle
        self.res = SimResult()
        self.tracing = trace
        self.events: list[TraceEvent] = []
        self.step_log: list[list] = []
        self.pending_meta = 0
        self._pending_reqs: list = []
        self._rr = 0
        self._last_words = 0
        self._last_cycles = 0
        self._last_slots = 0

    def cost(self, words: int) -> int:
        return max(1, -(-words // self.cap))

    # -- single steps -----------------------------------------------------

    def step(self, *, w=0, x=0, p=0, o=0, zeros=0, macs=0, reqs=(), pes=()) -> None:
        """One controller step. Parked metadata rides along as weight reads."""
        if self.pending_meta:
            w += self.pending_meta
            self.pending_meta = 0
            if self.tracing:
                reqs = self._pending_reqs + list(reqs)
            self._pending_reqs = []
        res = self.res
        words = w + x + p + o
        cyc = self.cost(words)
        if self.tracing:
            step_no, start = res.steps, res.cycles
            self.step_log.append([step_no, start, cyc, words, macs])
            self._last_slots = self._emit(step_no, start, reqs)
            for r, c in pes:
                self.events.append(TraceEvent(step_no, start + cyc - 1, f"PE[{r},{c}]", "mac", ""))
        res.steps += 1
        res.cycles += cyc
        res.weight_words_read += w
        res.input_words_read += x
        res.psum_words_read += p
        res.output_words_written += o
        res.zeros_emitted += zeros
        res.mac_ops += macs
        self._last_words, self._last_cycles = words, cyc

    def _emit(self, step_no: int, start: int, reqs) -> int:
        queues: dict[str, list] = {}
        for unit, action, addr in reqs:
            if action == "zero":
                self.events.append(TraceEvent(step_no, start, unit, action, addr))
            else:
                queues.setdefault(unit, []).append((action, addr))
        order = list(queues)
        if order:
            k = self._rr % len(order)
            order = order[k:] + order[:k]
        self._rr += 1
        slot = 0
        while order:
            for unit in order:
                action, addr = queues[unit].pop(0)
                self.events.append(TraceEvent(step_no, start + slot // self.cap, unit, action, addr))
                slot += 1
            order = [u for u in order if queues[u]]
        return slot

    def add_to_last_step(self, *, o: int = 0, reqs=()) -> None:
        """Attach output writes to the most recent step, re-pricing its stall."""
        if o == 0:
            return
        res = self.res
        words = self._last_words + o
        cyc = self.cost(words)
        res.cycles += cyc - self._last_cycles
        res.output_words_written += o
        self._last_words, self._last_cycles = words, cyc
        if self.tracing and self.step_log:
            entry = self.step_log[-1]
            entry[2], entry[3] = cyc, words
            for unit, action, addr in reqs:
                self.events.append(TraceEvent(entry[0], entry[1] + self._last_slots // self.cap, unit, action, addr))
                self._last_slots += 1

    def park_metadata(self, words: int, reqs=()) -> None:
        """Defer tile metadata reads to the next step that touches memory."""
        self.pending_meta += words
        if self.tracing:
            self._pending_reqs.extend(reqs)

    def idle(self, n: int) -> None:
        """``n`` steps with no memory traffic and no MACs."""
        for _ in range(n) if self.tracing else ():
            self.step()
        if not self.tracing and n > 0:
            self.res.steps += n
            self.res.cycles += n
            self._last_words, self._last_cycles = 0, 1

    def bulk(self, *, steps: int, cycles: int, last_words: int = 0, **counters) -> None:
        """Account a run of steps; ``last_words`` is the traffic of the final one."""
        res = self.res
        res.steps += steps
        res.cycles += cycles
        for name, v in counters.items():
            setattr(res, name, getattr(res, name) + v)
        self._last_words, self._last_cycles = last_words, self.cost(last_words)

    # -- compound phases --------------------------------------------------

    def wavefront(self, rows: int, cols: int) -> None:
        """Skewed sweep over a ``rows x cols`` PE block; PE (r, c) fires at offset r + c."""
        n = rows + cols - 1
        if not self.tracing:
            res = self.res
            res.steps += n
            res.cycles += n
            res.mac_ops += rows * cols
            self._last_words, self._last_cycles = 0, 1
            return
        waves: list[list] = [[] for _ in range(n)]
        for r in range(rows):
            for c in range(cols):
                waves[r + c].append((r, c))
        for pes in waves:
            self.step(macs=len(pes), pes=pes)

    def phase(self, *, w=0, x=0, p=0, zeros=0, rows: int, cols: int, o=0, count=1,
              reqs=(), out_reqs=()) -> None:
        """``count`` identical (load step, wavefront, write on last step) phases."""
        if count <= 0:
            return
        if self.tracing or self.pending_meta:
            reps = count if self.tracing else 1
            for _ in range(reps):
                self.step(w=w, x=x, p=p, zeros=zeros, reqs=reqs)
                self.wavefront(rows, cols)
                self.add_to_last_step(o=o, reqs=out_reqs)
            count -= reps
            if count == 0:
                return
        span = rows + cols - 1
        res = self.res
        last = self.cost(o)
        res.steps += count * (1 + span)
        res.cycles += count * (self.cost(w + x + p) + span - 1 + last)
        res.weight_words_read += count * w
        res.input_words_read += count * x
        res.psum_words_read += count * p
        res.output_words_written += count * o
        res.zeros_emitted += count * zeros
        res.mac_ops += count * rows * cols
        self._last_words, self._last_cycles = o, last

    def result(self, dataflow: str) -> SimResult:
        if self.pending_meta:
            self.step()
        self.res.dataflow = dataflow
        if self.tracing:
            self.res.trace = self.events
            self.res.step_log = [tuple(e) for e in self.step_log]
        return self.res
