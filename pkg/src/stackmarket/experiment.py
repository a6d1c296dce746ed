"""Similarity-threshold sweeps, company-led baseline and CSV/SVG/JSON reports."""

from __future__ import annotations

import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from . import allocation
from .equilibrium import PERMISSIVE, verify_follower_ne
from .follower import FollowerGame, FollowerProfile, OfferModel, TeamFormation, greedy_team_formation
from .leader import cluster_tasks, member_payment, tasks_from_profile
from .model import MarketInstance, Task, derive_task, to_money
from .serialize import dumps, jsonable

CSV_COLUMNS = (
    "threshold", "failure_fraction", "avg_revenue", "avg_payment", "is_ne", "phi",
    "stddev_failure_fraction", "stddev_avg_revenue", "stddev_avg_payment", "stddev_phi", "ne_fraction",
)
METRICS = ("failure_fraction", "avg_revenue", "avg_payment")


@dataclass(frozen=True)
class Metrics:
    failure_fraction: float
    avg_revenue: float
    avg_payment: float

    def to_dict(self) -> dict:
        return jsonable({f.name: getattr(self, f.name) for f in fields(self)})


def _mean(values) -> Fraction:
    values = list(values)
    return sum(values, Fraction(0)) / len(values) if values else Fraction(0)


PAYMENT_BASES = ("all", "served")


def market_metrics(tasks: Sequence[Task], formation: TeamFormation, inst: MarketInstance,
                   price: str = "offer", ties: str = "first", include_ops: bool = True,
                   payment_basis: str = "all"):
    """Allocation outcome plus failure fraction, mean company revenue and mean customer payment.

    ``payment_basis="all"`` averages every customer's task price whether or not
    the task was served; ``"served"`` averages only customers whose task completed.
    """
    if payment_basis not in PAYMENT_BASES:
        raise ValueError(f"payment_basis must be one of {PAYMENT_BASES}")
    result = allocation.allocate(tasks, formation, inst, price, ties)
    revenue = allocation.realized_revenue(tasks, formation, result, inst, include_ops)
    paid = [
        member_payment(inst.customer(x), tasks[t], inst.discount)
        for t, m in result.assignment.items() if m is not None or payment_basis == "all"
        for x in sorted(tasks[t].members)
    ]
    metrics = Metrics(
        failure_fraction=float(Fraction(result.failed_customers, len(inst.customers))),
        avg_revenue=float(_mean(revenue.values())),
        avg_payment=float(_mean(paid)) if paid else math.nan,
    )
    return result, metrics


def run_company_led_baseline(inst: MarketInstance, price: str = "offer", ties: str = "first",
                             include_ops: bool = True, payment_basis: str = "all") -> Metrics:
    """Every customer submits alone and every company bids alone."""
    tasks = [derive_task({c.id}, inst) for c in inst.customers]
    formation = TeamFormation.from_blocks([{y} for y in inst.company_ids], inst)
    return market_metrics(tasks, formation, inst, price, ties, include_ops, payment_basis)[1]


@dataclass(frozen=True)
class SweepConfig:
    n_tasks: int = 20
    threshold_lo: Fraction = Fraction(0)
    threshold_hi: Fraction = Fraction(3, 5)
    steps: int = 300
    replicas: int = 1
    seed: int = 0
    semantics: str = PERMISSIVE
    offer_mode: str = "det"
    price: str = "offer"
    ties: str = "first"
    include_ops: bool = True
    payment_basis: str = "all"
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "threshold_lo", to_money(self.threshold_lo))
        object.__setattr__(self, "threshold_hi", to_money(self.threshold_hi))
        if not 0 <= self.threshold_lo <= self.threshold_hi <= 1:
            raise ValueError("thresholds must satisfy 0 <= lo <= hi <= 1")
        if self.steps < 1 or self.replicas < 1 or self.threads < 1 or self.n_tasks < 1:
            raise ValueError("steps, replicas, threads and n_tasks must be positive")
        if self.offer_mode not in ("det", "mc"):
            raise ValueError("offer_mode must be 'det' or 'mc'")

    @property
    def thresholds(self) -> list[Fraction]:
        if self.threshold_lo == self.threshold_hi:
            return [self.threshold_lo]
        span = self.threshold_hi - self.threshold_lo
        return [self.threshold_lo + span * i / self.steps for i in range(self.steps + 1)]

    def offer_model(self) -> OfferModel:
        return OfferModel.deterministic() if self.offer_mode == "det" else OfferModel.uniform(seed=self.seed)

    def to_dict(self) -> dict:
        return jsonable({f.name: getattr(self, f.name) for f in fields(self)})


@dataclass(frozen=True)
class SweepRow:
    threshold: Fraction
    failure_fraction: float
    avg_revenue: float
    avg_payment: float
    is_ne: bool
    phi: float
    stddev_failure_fraction: float = 0.0
    stddev_avg_revenue: float = 0.0
    stddev_avg_payment: float = 0.0
    stddev_phi: float = 0.0
    ne_fraction: float = 0.0

    def to_dict(self) -> dict:
        return jsonable({f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRow":
        kw = {}
        for f in fields(cls):
            v = d[f.name]
            if f.name == "threshold":
                kw[f.name] = Fraction(v)
            elif f.name == "is_ne":
                kw[f.name] = bool(v)
            else:
                kw[f.name] = float(v)
        return cls(**kw)


@dataclass
class SweepReport:
    rows: list[SweepRow]
    baseline: Metrics | None
    ne_threshold: Fraction | None = None
    prf: dict = field(default_factory=dict)
    replica_rows: list[list[SweepRow]] = field(default_factory=list)
    replica_baselines: list[Metrics] = field(default_factory=list)
    replica_ne_thresholds: list = field(default_factory=list)
    first_ne_threshold: Fraction | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable({
            "rows": [r.to_dict() for r in self.rows],
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "ne_threshold": self.ne_threshold,
            "prf": self.prf,
            "replica_rows": [[r.to_dict() for r in rows] for rows in self.replica_rows],
            "replica_baselines": [b.to_dict() for b in self.replica_baselines],
            "replica_ne_thresholds": self.replica_ne_thresholds,
            "first_ne_threshold": self.first_ne_threshold,
            "config": self.config,
        })

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        def metrics(m):
            return Metrics(**{k: float(v) for k, v in m.items()}) if m else None

        return cls(
            rows=[SweepRow.from_dict(r) for r in d["rows"]],
            baseline=metrics(d.get("baseline")),
            ne_threshold=Fraction(d["ne_threshold"]) if d.get("ne_threshold") is not None else None,
            prf={k: float(v) for k, v in d.get("prf", {}).items()},
            replica_rows=[[SweepRow.from_dict(r) for r in rows] for rows in d.get("replica_rows", [])],
            replica_baselines=[metrics(b) for b in d.get("replica_baselines", [])],
            replica_ne_thresholds=[Fraction(t) if t is not None else None
                                   for t in d.get("replica_ne_thresholds", [])],
            first_ne_threshold=(Fraction(d["first_ne_threshold"])
                                if d.get("first_ne_threshold") is not None else None),
            config=d.get("config", {}),
        )


def prf(customer_led: float, company_led: float) -> float:
    """Percentage change against the baseline, signed by improvement direction of the raw difference."""
    if company_led == 0 or math.isnan(customer_led) or math.isnan(company_led):
        return math.nan
    return (customer_led - company_led) / abs(company_led) * 100


# worker-side state: instances and task lists, installed once per process
_STATE: dict = {}


def _install(instances, tasks, cfg):
    _STATE["instances"], _STATE["tasks"], _STATE["cfg"] = instances, tasks, cfg


def _cell(job: tuple[int, Fraction]) -> SweepRow:
    replica, threshold = job
    inst = _STATE["instances"][replica]
    tasks = _STATE["tasks"][replica]
    cfg: SweepConfig = _STATE["cfg"]
    formation = greedy_team_formation(inst.companies, threshold, seed=cfg.seed + replica)
    _, m = market_metrics(tasks, formation, inst, cfg.price, cfg.ties, cfg.include_ops, cfg.payment_basis)
    profile = FollowerProfile.canonical(formation.blocks)
    det = OfferModel.deterministic()
    game = FollowerGame(tasks, inst, det, cfg.include_ops)
    ne = verify_follower_ne(profile, tasks, inst, det, cfg.semantics, game=game).is_ne
    if cfg.offer_mode == "det":
        phi = game.potential(formation.blocks)
    else:
        phi = FollowerGame(tasks, inst, cfg.offer_model(), cfg.include_ops).potential(formation.blocks)
    return SweepRow(threshold, m.failure_fraction, m.avg_revenue, m.avg_payment, ne, float(phi),
                    ne_fraction=1.0 if ne else 0.0)


def _std(values: list[float]) -> float:
    values = [v for v in values if not math.isnan(v)]
    return statistics.stdev(values) if len(values) > 1 else 0.0


def _fmean(values: list[float]) -> float:
    values = [v for v in values if not math.isnan(v)]
    return math.fsum(values) / len(values) if values else math.nan


def _aggregate(threshold, cells: list[SweepRow]) -> SweepRow:
    return SweepRow(
        threshold=threshold,
        failure_fraction=_fmean([c.failure_fraction for c in cells]),
        avg_revenue=_fmean([c.avg_revenue for c in cells]),
        avg_payment=_fmean([c.avg_payment for c in cells]),
        is_ne=all(c.is_ne for c in cells),
        phi=_fmean([c.phi for c in cells]),
        stddev_failure_fraction=_std([c.failure_fraction for c in cells]),
        stddev_avg_revenue=_std([c.avg_revenue for c in cells]),
        stddev_avg_payment=_std([c.avg_payment for c in cells]),
        stddev_phi=_std([c.phi for c in cells]),
        ne_fraction=sum(c.is_ne for c in cells) / len(cells),
    )


def _first_ne(rows: Sequence[SweepRow]):
    return next((r.threshold for r in rows if r.is_ne), None)


def _first_trading_ne(replica_rows: Sequence[Sequence[SweepRow]]):
    """Smallest threshold that is an NE with positive expected team profit in every replica.

    Low thresholds can be stable only because no team is able to serve any
    task; those no-trade equilibria are skipped here.
    """
    for cells in zip(*replica_rows):
        if all(c.is_ne and c.phi > 0 for c in cells):
            return cells[0].threshold
    return None


def replica_tasks(inst: MarketInstance, n_tasks: int, seed) -> list[Task]:
    n_tasks = min(n_tasks, len(inst.customers))
    return tasks_from_profile(cluster_tasks(inst.customers, n_tasks, seed=seed), inst)


def run_sweep(instances: MarketInstance | Sequence[MarketInstance], cfg: SweepConfig = SweepConfig()) -> SweepReport:
    """Sweep the teaming threshold over every replica and average the rows.

    Replica ``r`` uses seed ``cfg.seed + r`` for clustering and for the
    teaming shuffle, shared by every threshold of that replica. A single
    instance is reused by all replicas; a sequence supplies one per replica.
    """
    if isinstance(instances, MarketInstance):
        instances = [instances] * cfg.replicas
    instances = list(instances)
    if len(instances) != cfg.replicas:
        raise ValueError(f"expected {cfg.replicas} instances, got {len(instances)}")
    tasks = [replica_tasks(inst, cfg.n_tasks, cfg.seed + r) for r, inst in enumerate(instances)]
    thresholds = cfg.thresholds
    jobs = [(r, t) for r in range(cfg.replicas) for t in thresholds]
    if cfg.threads == 1:
        _install(instances, tasks, cfg)
        cells = [_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads, initializer=_install,
                                 initargs=(instances, tasks, cfg)) as pool:
            cells = list(pool.map(_cell, jobs, chunksize=max(1, len(jobs) // (4 * cfg.threads))))

    n = len(thresholds)
    replica_rows = [cells[r * n:(r + 1) * n] for r in range(cfg.replicas)]
    rows = [_aggregate(t, [rr[i] for rr in replica_rows]) for i, t in enumerate(thresholds)]
    baselines = [run_company_led_baseline(inst, cfg.price, cfg.ties, cfg.include_ops, cfg.payment_basis)
                 for inst in instances]
    baseline = Metrics(*(_fmean([getattr(b, k) for b in baselines]) for k in METRICS))
    ne_threshold = _first_trading_ne(replica_rows)
    report_prf = {}
    if ne_threshold is not None:
        row = next(r for r in rows if r.threshold == ne_threshold)
        report_prf = {k: prf(getattr(row, k), getattr(baseline, k)) for k in METRICS}
    return SweepReport(
        rows=rows,
        baseline=baseline,
        ne_threshold=ne_threshold,
        prf=report_prf,
        replica_rows=replica_rows,
        replica_baselines=baselines,
        replica_ne_thresholds=[_first_trading_ne([rr]) for rr in replica_rows],
        first_ne_threshold=_first_ne(rows),
        config=cfg.to_dict(),
    )


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def render_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in report.rows:
        values = []
        for col in CSV_COLUMNS:
            v = getattr(r, col)
            if col == "threshold":
                values.append(f"{float(v):.6f}")
            elif col == "is_ne":
                values.append("true" if v else "false")
            else:
                values.append(_num(v))
        buf.write(",".join(values) + "\n")
    return buf.getvalue()


def _write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def emit_csv(report: SweepReport, path) -> Path:
    return _write(path, render_csv(report))


def emit_json(report: SweepReport, path) -> Path:
    return _write(path, dumps(report.to_dict()))


def load_report(path) -> SweepReport:
    return SweepReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


W, H, PAD = 640, 300, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22")


def _panel(title: str, xs, series, baseline, y0: int, out: list[str]):
    """One chart: ``series`` is a list of (label, values, style) drawn as polylines."""
    finite = [v for _, vals, _ in series for v in vals if not math.isnan(v)]
    if baseline is not None and not math.isnan(baseline):
        finite.append(baseline)
    lo, hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if hi == lo:
        hi, lo = hi + 1, lo - 1
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1

    def sx(x):
        return PAD + (x - x_lo) / (x_hi - x_lo) * (W - 2 * PAD)

    def sy(v):
        return y0 + H - PAD - (v - lo) / (hi - lo) * (H - 2 * PAD)

    out.append(f'<text x="{W / 2:.1f}" y="{y0 + 20}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{PAD}" y="{y0 + PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
               f'fill="none" stroke="#333"/>')
    out.append(f'<text x="{PAD}" y="{y0 + H - PAD + 16}" font-size="10">{x_lo:.3f}</text>')
    out.append(f'<text x="{W - PAD}" y="{y0 + H - PAD + 16}" font-size="10" text-anchor="end">{x_hi:.3f}</text>')
    out.append(f'<text x="{PAD - 4}" y="{sy(hi):.1f}" font-size="10" text-anchor="end">{hi:.4g}</text>')
    out.append(f'<text x="{PAD - 4}" y="{sy(lo):.1f}" font-size="10" text-anchor="end">{lo:.4g}</text>')
    for label, vals, style in series:
        pts = " ".join(f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(xs, vals) if not math.isnan(v))
        out.append(f'<polyline fill="none" {style} points="{pts}"><title>{escape(label)}</title></polyline>')
    if baseline is not None and not math.isnan(baseline):
        y = sy(baseline)
        out.append(f'<line x1="{PAD}" y1="{y:.2f}" x2="{W - PAD}" y2="{y:.2f}" stroke="#e6a700" '
                   f'stroke-dasharray="6,4"><title>company-led baseline</title></line>')


def render_svg(report: SweepReport) -> str:
    """Failure and revenue against threshold; mean curves, per-replica revenue curves and baselines."""
    xs = [float(r.threshold) for r in report.rows]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{2 * H}" viewBox="0 0 {W} {2 * H}">',
           f'<rect width="{W}" height="{2 * H}" fill="white"/>']
    base = report.baseline
    _panel("failure fraction vs similarity threshold", xs,
           [("mean failure fraction", [r.failure_fraction for r in report.rows],
             f'stroke="{COLORS[0]}" stroke-width="2"')],
           base.failure_fraction if base else None, 0, out)
    revenue = [("mean company revenue", [r.avg_revenue for r in report.rows], f'stroke="{COLORS[1]}" stroke-width="2"')]
    for i, rows in enumerate(report.replica_rows):
        revenue.append((f"replica {i} revenue", [r.avg_revenue for r in rows],
                        f'stroke="{COLORS[(i + 2) % len(COLORS)]}" stroke-width="1" stroke-opacity="0.5"'))
    _panel("average company revenue vs similarity threshold", xs, revenue, base.avg_revenue if base else None, H, out)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(report: SweepReport, path) -> Path:
    return _write(path, render_svg(report))
