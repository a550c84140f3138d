"""Leader fee-share bounds and censorship wait time.

``alpha`` is the attacker's share of mining power and ``r`` the fraction of a
transaction fee paid to the leader that serialises it.  Rational inputs
(``int`` or ``Fraction``) give exact rational results; floats give floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from numbers import Rational

from scipy.optimize import brentq

# the fee split the protocol ships with
DEFAULT_LEADER_SHARE = Fraction(2, 5)


class DomainError(ValueError):
    pass


def _check_alpha(alpha) -> None:
    if not 0 <= alpha < 1:
        raise DomainError(f"alpha must be in [0, 1), got {alpha}")


def _one(x):
    return Fraction(1) if isinstance(x, Rational) else 1.0


def r_leader_lower(alpha):
    """Smallest leader share at which including a transaction beats holding it
    back to mine the next key block and claim the whole fee."""
    _check_alpha(alpha)
    one = _one(alpha)
    return one - (one - alpha) / (one + alpha - alpha * alpha)


def r_leader_upper(alpha):
    """Largest leader share at which extending the chain beats forking off the
    previous leader's last microblock to collect its fees as well."""
    _check_alpha(alpha)
    one = _one(alpha)
    return (one - alpha) / (2 * one - alpha)


def inclusion_deviation_payoff(alpha, r):
    """``(deviate, comply)`` expected fee shares for a leader who withholds a
    transaction hoping to mine the next key block."""
    one = _one(alpha) if isinstance(r, Rational) else 1.0
    return alpha + (one - alpha) * alpha * (one - r), r


def extension_deviation_payoff(alpha, r):
    """``(deviate, comply)`` fee shares for a miner choosing between extending
    the latest microblock and forking it out."""
    one = _one(alpha) if isinstance(r, Rational) else 1.0
    return r + alpha * (one - r), one - r


@dataclass(frozen=True)
class IncentiveBounds:
    alpha: object
    r_lower: object
    r_upper: object

    @property
    def feasible(self) -> bool:
        return self.r_lower < self.r_upper

    def admits(self, r) -> bool:
        # strict inequalities: the boundary itself is not incentive compatible
        return self.r_lower < r < self.r_upper


def bounds(alpha) -> IncentiveBounds:
    return IncentiveBounds(alpha, r_leader_lower(alpha), r_leader_upper(alpha))


def feasible_split(alpha, r) -> tuple[bool, IncentiveBounds]:
    b = bounds(alpha)
    return b.admits(r), b


def censorship_wait(honest_fraction, mean_block_interval):
    """Expected wait until an honest leader is elected: a geometric number of
    key blocks with success probability ``honest_fraction``."""
    if not 0 < honest_fraction <= 1:
        raise DomainError(f"honest_fraction must be in (0, 1], got {honest_fraction}")
    return mean_block_interval / honest_fraction


def window_closing_alpha(lo: float = 0.0, hi: float = 0.99) -> float:
    """Attacker share at which the lower and upper bounds meet."""
    return brentq(lambda a: float(r_leader_upper(a)) - float(r_leader_lower(a)), lo, hi,
                  xtol=1e-15)


def solve_lower_from_payoff(alpha: float) -> float:
    """Root in ``r`` of deviate == comply for the inclusion game."""
    def gap(r):
        d, c = inclusion_deviation_payoff(alpha, r)
        return d - c
    return brentq(gap, 0.0, 1.0, xtol=1e-15)


def solve_upper_from_payoff(alpha: float) -> float:
    def gap(r):
        d, c = extension_deviation_payoff(alpha, r)
        return d - c
    return brentq(gap, 0.0, 1.0, xtol=1e-15)


def render(x, digits: int = 4) -> str:
    """Decimal rendering at ``digits`` significant digits."""
    if isinstance(x, Fraction):
        d = Decimal(x.numerator) / Decimal(x.denominator)
    else:
        d = Decimal(repr(float(x)))
    return "0" if d == 0 else f"{d:.{digits}g}"


def bounds_table(alphas, r=DEFAULT_LEADER_SHARE) -> list[tuple]:
    """Rows of ``(alpha, r_lower, r_upper, admits r)``."""
    rows = []
    for a in alphas:
        b = bounds(a)
        rows.append((a, b.r_lower, b.r_upper, b.admits(r)))
    return rows


def bounds_csv(alphas, r=DEFAULT_LEADER_SHARE) -> str:
    head = f"alpha,r_lower,r_upper,feasible_at_{float(r):.2f}"
    lines = [head]
    for a, lo, up, ok in bounds_table(alphas, r):
        lines.append(f"{render(a)},{render(lo)},{render(up)},{str(ok).lower()}")
    return "\n".join(lines) + "\n"
