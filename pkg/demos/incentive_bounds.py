"""Which leader fee shares keep rational miners honest?"""
from fractions import Fraction

from ngsim import incentives

print(incentives.bounds_csv([Fraction(k, 24) for k in range(9)]), end="")

closing = incentives.window_closing_alpha()
print(f"\nno admissible share once an attacker holds more than {closing:.4f} of the power")
print(f"the shipped 40% share is safe up to alpha = 1/4: "
      f"{incentives.feasible_split(Fraction(1, 4), Fraction(2, 5))[0]}")
print(f"censoring leaders with 1/4 of the power delay a transaction by "
      f"{float(incentives.censorship_wait(Fraction(3, 4), 600)) / 60:.2f} minutes on average")
