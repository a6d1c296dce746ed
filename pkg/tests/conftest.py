from fractions import Fraction

import pytest

from stackmarket.leader import DiscountModel
from stackmarket.model import Company, Customer, MarketInstance, ServiceCatalog, derive_task


def make_f1() -> MarketInstance:
    customers = (
        Customer("x1", {"s1", "s2"}, {"s1": 100, "s2": 200}),
        Customer("x2", {"s1"}, {"s1": 120}),
        Customer("x3", {"s3"}, {"s3": 300}),
    )
    companies = (
        Company("y1", {"s1", "s2"}, {"s1": 30, "s2": 50}, {"s1": 60, "s2": 90}),
        Company("y2", {"s1"}, {"s1": 20}, {"s1": 50}),
        Company("y3", {"s3", "s4"}, {"s3": 40, "s4": 40}, {"s3": 80, "s4": 70}),
    )
    table = DiscountModel.from_table({1: Fraction(1), 2: Fraction(4, 5), 3: Fraction(7, 10)})
    return MarketInstance(ServiceCatalog(("s1", "s2", "s3", "s4")), customers, companies,
                          lam=Fraction(9, 10), discount=table)


@pytest.fixture
def f1() -> MarketInstance:
    return make_f1()


@pytest.fixture
def f1_tasks(f1):
    return [derive_task({"x1", "x2"}, f1), derive_task({"x3"}, f1)]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
