"""JSON instance documents and conversion of results to JSON-safe values."""

from __future__ import annotations

import dataclasses
import json
import math
from fractions import Fraction
from pathlib import Path

from .leader import DiscountModel
from .model import Company, Customer, MarketInstance, ServiceCatalog, ValidationError

SCHEMA = "stackmarket.instance/1"


def money_str(x: Fraction) -> str:
    return str(x)


def jsonable(obj):
    """Recursively turn results into JSON-safe values; money becomes an exact string."""
    if isinstance(obj, Fraction):
        return money_str(obj)
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, (frozenset, set)):
        return sorted(jsonable(v) for v in obj)
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return obj.to_dict()
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    return obj


def instance_to_dict(inst: MarketInstance) -> dict:
    return {
        "schema": SCHEMA,
        "catalog": list(inst.catalog),
        "customers": [
            {"id": c.id, "needs": sorted(c.needs), "prices": {s: money_str(c.prices[s]) for s in sorted(c.needs)}}
            for c in inst.customers
        ],
        "companies": [
            {
                "id": y.id,
                "services": sorted(y.services),
                "costs": {s: money_str(y.costs[s]) for s in sorted(y.services)},
                "offers": {s: money_str(y.offers[s]) for s in sorted(y.services)},
                "ops_cost": money_str(y.ops_cost),
            }
            for y in inst.companies
        ],
        "economics": {
            "lambda": money_str(inst.lam),
            "penalty_xi": money_str(inst.penalty_xi),
            "discount": inst.discount.to_dict(),
        },
    }


def instance_from_dict(data: dict) -> MarketInstance:
    if data.get("schema") != SCHEMA:
        raise ValidationError(f"unsupported instance schema {data.get('schema')!r}")
    try:
        econ = data["economics"]
        return MarketInstance(
            catalog=ServiceCatalog(tuple(data["catalog"])),
            customers=tuple(
                Customer(c["id"], frozenset(c["needs"]), {s: Fraction(p) for s, p in c["prices"].items()})
                for c in data["customers"]
            ),
            companies=tuple(
                Company(
                    y["id"],
                    frozenset(y["services"]),
                    {s: Fraction(v) for s, v in y["costs"].items()},
                    {s: Fraction(v) for s, v in y["offers"].items()},
                    Fraction(y.get("ops_cost", "0")),
                )
                for y in data["companies"]
            ),
            lam=Fraction(econ["lambda"]),
            penalty_xi=Fraction(econ["penalty_xi"]),
            discount=DiscountModel.from_dict(econ["discount"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed instance document: {exc}") from exc


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=1, sort_keys=True) + "\n"


def save_instance(inst: MarketInstance, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(instance_to_dict(inst)), encoding="utf-8")
    return path


def load_instance(path) -> MarketInstance:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return instance_from_dict(data)
