"""Bank-level GDDR6 functional model with activation-disturbance bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, OutOfRange, TimingViolation

DIRECTIONS = ("one_to_zero", "zero_to_one")
DATA_RULES = ("always", "adjacent_inverse", "adjacent_or_diagonal")


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class DramTiming:
    """Nanosecond-granular command timing; all fields are integers."""

    trc_ns: int = 45
    trefi_ns: int = 1407
    refs_per_window: int = 16384
    trfc_ns: int = 250
    conflict_extra_ns: int | None = None  # defaults to trc_ns

    def __post_init__(self):
        if min(self.trc_ns, self.trefi_ns, self.refs_per_window, self.trfc_ns) <= 0:
            raise ConfigError("timing fields must be positive")
        if self.trfc_ns >= self.trefi_ns:
            raise ConfigError("trfc_ns must be smaller than trefi_ns")
        if self.conflict_extra_ns is None:
            object.__setattr__(self, "conflict_extra_ns", self.trc_ns)
        elif self.conflict_extra_ns < 0:
            raise ConfigError("conflict_extra_ns must be non-negative")

    @property
    def window_ns(self) -> int:
        """One full refresh window."""
        return self.trefi_ns * self.refs_per_window


@dataclass(frozen=True)
class DramGeometry:
    channels: int = 2
    banks_per_channel: int = 16
    rows_per_bank: int = 1024
    row_bytes: int = 2048
    chunk_bytes: int = 256

    def __post_init__(self):
        for name in ("channels", "banks_per_channel", "rows_per_bank", "row_bytes", "chunk_bytes"):
            if not _is_pow2(getattr(self, name)):
                raise ConfigError(f"{name} must be a power of two")
        if self.row_bytes % self.chunk_bytes:
            raise ConfigError("row_bytes must be a multiple of chunk_bytes")

    @property
    def total_banks(self) -> int:
        return self.channels * self.banks_per_channel

    @property
    def slots_per_row(self) -> int:
        return self.row_bytes // self.chunk_bytes

    @property
    def capacity_bytes(self) -> int:
        return self.total_banks * self.rows_per_bank * self.row_bytes

    def rows_per_ref(self, timing: DramTiming) -> int:
        # at least one row per REF; large banks burst several rows per REF
        return max(1, self.rows_per_bank // timing.refs_per_window)

    def validate_refresh(self, timing: DramTiming) -> None:
        r, w = self.rows_per_bank, timing.refs_per_window
        if r % w and w % r:
            raise ConfigError("rows_per_bank and refs_per_window must divide one another")


@dataclass(frozen=True)
class CellVulnerability:
    """One physically weak cell and the activation pattern that disturbs it.

    `bank` is a flat id: channel * banks_per_channel + bank_in_channel.
    `critical_deltas` are row offsets of aggressors relative to the victim row.
    """

    bank: int
    row: int
    byte_off: int
    bit: int
    direction: str
    trh: int
    critical_deltas: frozenset
    data_rule: str = "always"

    def __post_init__(self):
        object.__setattr__(self, "critical_deltas", frozenset(self.critical_deltas))
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"unknown direction {self.direction!r}")
        if self.data_rule not in DATA_RULES:
            raise ConfigError(f"unknown data_rule {self.data_rule!r}")
        if not 0 <= self.bit <= 7:
            raise ConfigError("bit must be 0..7")
        if self.trh <= 0:
            raise ConfigError("trh must be positive")
        if not self.critical_deltas:
            raise ConfigError("critical_deltas must be non-empty")
        if any(d == 0 or abs(d) > 3 for d in self.critical_deltas):
            raise ConfigError("critical_deltas must be non-zero and within +-3")

    @property
    def source_bit(self) -> int:
        return 1 if self.direction == "one_to_zero" else 0


def data_rule_allows(cell: CellVulnerability, victim_byte: int, aggressor_byte: int) -> bool:
    """Does the stored data pattern satisfy the cell's coupling rule?"""
    if cell.data_rule == "always":
        return True
    inv = (victim_byte >> cell.bit & 1) ^ 1
    if (aggressor_byte >> cell.bit & 1) == inv:
        return True
    if cell.data_rule == "adjacent_inverse":
        return False
    lo, hi = max(0, cell.bit - 1), min(7, cell.bit + 1)
    return (aggressor_byte >> lo & 1) == inv or (aggressor_byte >> hi & 1) == inv


class Bank:
    """Mutable per-bank state: open row, disturbance counters, stored data.

    Data is sparse; untouched rows read as the device fill byte. A pristine
    shadow keeps the last *written* content so flips can be diffed out later.
    """

    def __init__(self, geometry, timing, cells=(), sampler=None, row_remap=None, fill=0x00):
        self.geometry = geometry
        self.timing = timing
        self.fill = fill
        self.sampler = sampler
        self.row_remap = row_remap  # logical -> physical, identity when None
        self.open_row = None
        self.last_act_ns = None
        self.row_data = {}
        self.pristine_shadow = {}
        self.disturbance = {}
        self.next_ref_cursor = 0
        self.ecc_checks = {}
        self.cells = tuple(cells)
        by_row = {}
        for c in self.cells:
            if not 0 <= c.row < geometry.rows_per_bank:
                raise ConfigError("cell row outside bank")
            if not 0 <= c.byte_off < geometry.row_bytes:
                raise ConfigError("cell byte_off outside row")
            for d in c.critical_deltas:
                agg = c.row + d
                if 0 <= agg < geometry.rows_per_bank:
                    by_row.setdefault(agg, []).append(c)
        self._aggressor_map = by_row

    # -- data plumbing -------------------------------------------------

    def _phys(self, row: int) -> int:
        if not 0 <= row < self.geometry.rows_per_bank:
            raise OutOfRange(f"row {row}")
        return self.row_remap(row) if self.row_remap else row

    def _data(self, phys: int) -> bytearray:
        buf = self.row_data.get(phys)
        if buf is None:
            buf = self.row_data[phys] = bytearray([self.fill]) * self.geometry.row_bytes
        return buf

    def reset_timing(self) -> None:
        """Start a fresh hammer session: timing state and counters, not data."""
        self.open_row = None
        self.last_act_ns = None
        self.disturbance.clear()
        self.next_ref_cursor = 0
        if self.sampler is not None:
            self.sampler.entries.clear()

    # -- commands ------------------------------------------------------

    def activate(self, row: int, t: int) -> int:
        """Open `row` at time t; returns the command completion timestamp."""
        phys = self._phys(row)
        if self.last_act_ns is not None and t < self.last_act_ns + self.timing.trc_ns:
            raise TimingViolation(f"ACT at {t} within trc of {self.last_act_ns}")
        self.last_act_ns = t
        self.open_row = phys
        if self.sampler is not None:
            self.sampler.observe_act(phys)
        hit = self._aggressor_map.get(phys)
        if hit:
            dist = self.disturbance
            for cell in hit:
                n = dist.get(cell.row, 0) + 1
                dist[cell.row] = n
                if n >= cell.trh:
                    self._try_flip(cell, phys)
        return t + self.timing.trc_ns

    def _try_flip(self, cell: CellVulnerability, aggressor_row: int) -> bool:
        vbuf = self.row_data.get(cell.row)
        vbyte = vbuf[cell.byte_off] if vbuf is not None else self.fill
        if (vbyte >> cell.bit & 1) != cell.source_bit:
            return False
        abuf = self.row_data.get(aggressor_row)
        abyte = abuf[cell.byte_off] if abuf is not None else self.fill
        if not data_rule_allows(cell, vbyte, abyte):
            return False
        self._data(cell.row)[cell.byte_off] = vbyte ^ (1 << cell.bit)
        return True

    def force_flip(self, cell: CellVulnerability, aggressor_row: int) -> bool:
        """Apply the flip a saturated-disturbance evaluation concluded must occur."""
        return self._try_flip(cell, aggressor_row)

    def refresh(self, ref_index: int, t: int) -> set:
        """One REF: walk the cursor, reset counters, drive the TRR hook."""
        rows = self.geometry.rows_per_bank
        burst = self.geometry.rows_per_ref(self.timing)
        covered = set()
        cur = self.next_ref_cursor
        for _ in range(burst):
            covered.add(cur)
            cur = (cur + 1) % rows
        self.next_ref_cursor = cur
        for r in covered:
            self.disturbance.pop(r, None)
        if self.sampler is not None:
            from .mitigations import trr_on_ref

            covered |= trr_on_ref(self.sampler, self)
        self.open_row = None
        return covered

    def reset_rows(self, rows) -> None:
        for r in rows:
            self.disturbance.pop(r, None)

    def read(self, row: int, byte_off: int, length: int) -> bytes:
        phys = self._phys(row)
        if byte_off < 0 or byte_off + length > self.geometry.row_bytes:
            raise OutOfRange(f"read [{byte_off}, {byte_off + length})")
        buf = self.row_data.get(phys)
        if buf is None:
            return bytes([self.fill]) * length
        return bytes(buf[byte_off:byte_off + length])

    def write(self, row: int, byte_off: int, data: bytes) -> None:
        phys = self._phys(row)
        if byte_off < 0 or byte_off + len(data) > self.geometry.row_bytes:
            raise OutOfRange(f"write [{byte_off}, {byte_off + len(data)})")
        self._data(phys)[byte_off:byte_off + len(data)] = data
        shadow = self.pristine_shadow.get(phys)
        if shadow is None:
            shadow = self.pristine_shadow[phys] = bytearray([self.fill]) * self.geometry.row_bytes
        shadow[byte_off:byte_off + len(data)] = data

    def collect_flips(self, clear: bool = False):
        """Diff stored data against the pristine shadow; ordered, non-clearing."""
        out = []
        for row in sorted(self.row_data):
            cur = self.row_data[row]
            ref = self.pristine_shadow.get(row)
            for off in range(self.geometry.row_bytes):
                was = ref[off] if ref is not None else self.fill
                now = cur[off]
                if was == now:
                    continue
                diff = was ^ now
                for bit in range(8):
                    if diff >> bit & 1:
                        direction = "one_to_zero" if was >> bit & 1 else "zero_to_one"
                        out.append((row, off, bit, direction))
        if clear:
            for row, buf in self.row_data.items():
                ref = self.pristine_shadow.get(row)
                buf[:] = ref if ref is not None else bytes([self.fill]) * len(buf)
        return out


class DramDevice:
    """A set of banks plus the mitigation hooks that sit in front of them."""

    def __init__(self, geometry, timing, profile=(), trr_config=None, ecc=None,
                 fill=0x00, row_remap=None):
        geometry.validate_refresh(timing)
        self.geometry = geometry
        self.timing = timing
        self.ecc = ecc
        self.fill = fill
        self.profile = tuple(profile)
        by_bank = {}
        for cell in self.profile:
            if not 0 <= cell.bank < geometry.total_banks:
                raise ConfigError("cell bank outside device")
            by_bank.setdefault(cell.bank, []).append(cell)
        self.banks = []
        for b in range(geometry.total_banks):
            sampler = trr_config.make_sampler() if trr_config is not None else None
            self.banks.append(Bank(geometry, timing, by_bank.get(b, ()), sampler,
                                   row_remap, fill))
        self.ecc_log = []

    def bank(self, flat: int) -> Bank:
        if not 0 <= flat < len(self.banks):
            raise OutOfRange(f"bank {flat}")
        return self.banks[flat]

    def cells_of(self, flat: int):
        return self.bank(flat).cells

    def begin_run(self) -> None:
        for b in self.banks:
            b.reset_timing()

    # -- byte access through the ECC hook ------------------------------

    def write(self, flat: int, row: int, byte_off: int, data: bytes) -> None:
        bank = self.bank(flat)
        bank.write(row, byte_off, data)
        if self.ecc is not None and self.ecc.enabled:
            from .mitigations import ecc_store

            w = self.ecc.word_bytes
            for widx in range(byte_off // w, (byte_off + len(data) - 1) // w + 1):
                word = bank.read(row, widx * w, w)
                checks = bank.ecc_checks.setdefault(row, bytearray(self.geometry.row_bytes // w))
                _, checks[widx] = ecc_store(word)

    def read(self, flat: int, row: int, byte_off: int, length: int) -> bytes:
        bank = self.bank(flat)
        raw = bank.read(row, byte_off, length)
        if self.ecc is None or not self.ecc.enabled:
            return raw
        from .mitigations import ecc_default_check, ecc_load

        w = self.ecc.word_bytes
        lo = byte_off // w * w
        hi = (byte_off + length - 1) // w * w + w
        checks = bank.ecc_checks.get(row)
        out = bytearray()
        for start in range(lo, hi, w):
            word = bank.read(row, start, w)
            check = checks[start // w] if checks is not None else ecc_default_check(self.fill, w)
            fixed, status = ecc_load(word, check)
            if status != "clean":
                self.ecc_log.append((flat, row, start // w, status))
            out += fixed
        return bytes(out[byte_off - lo:byte_off - lo + length])

    def collect_flips(self, flat: int, clear: bool = False):
        return self.bank(flat).collect_flips(clear=clear)

    def observed_flips(self, flat: int):
        """Flips as seen through the read path; ECC silently repairs singles."""
        raw = self.collect_flips(flat)
        if self.ecc is None or not self.ecc.enabled:
            return raw
        out = []
        w = self.ecc.word_bytes
        for row, off, bit, direction in raw:
            fixed = self.read(flat, row, off // w * w, w)
            ref = self.bank(flat).pristine_shadow.get(row)
            was = ref[off] if ref is not None else self.fill
            if fixed[off % w] != was:
                out.append((row, off, bit, direction))
        return out
