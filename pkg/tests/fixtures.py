"""Hand-computed metric fixtures; every expected value below was worked out
by hand from the per-query sets, not produced by the code under test."""

from fractions import Fraction as F

# (ranked predictions, gold set, hit, per-query F1)
TEN_QUERIES = [
    (["b"], {"B"}, 1, F(1)),
    (["x"], {"y"}, 0, F(0)),
    ([], {"a"}, 0, F(0)),
    (["a", "b"], {"b", "c"}, 0, F(1, 2)),
    (["  New   York "], {"new york"}, 1, F(1)),
    (["a", "b", "c"], {"a"}, 1, F(1, 2)),
    (["a"], {"a", "b", "c", "d"}, 1, F(2, 5)),
    (["c", "a"], {"a", "b"}, 0, F(1, 2)),
    (["A", "a"], {"a"}, 1, F(1)),
    (["z"], {"z", "y"}, 1, F(2, 3)),
]
TEN_HITS = F(6, 10)
TEN_F1_MACRO = F(167, 300)
# pooled: 8 true positives, 13 distinct predictions, 16 gold labels
TEN_F1_MICRO = F(16, 29)

# (id, hops, gold, predictions)
FOUR_QUERIES = [
    ("q1", 1, ["a"], ["a"]),
    ("q2", 2, ["a", "b", "c"], ["x"]),
    ("q3", 4, [f"g{i}" for i in range(12)], ["g0"]),
    ("q4", 2, [f"h{i}" for i in range(6)], ["h0", "h1", "zz"]),
]
# per query: hit 1, 0, 1, 1; F1 1, 0, 2/13, 4/9
FOUR_BY_HOPS = {"1": (1, F(1), F(1)), "2": (2, F(1, 2), F(2, 9)), ">=3": (1, F(1), F(2, 13))}
FOUR_BY_ANSWERS = {"1": (1, F(1), F(1)), "2-4": (1, F(0), F(0)),
                   "5-9": (1, F(1), F(4, 9)), ">=10": (1, F(1), F(2, 13))}
