import math
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthmention.errors import DataError
from synthmention.metrics import (
    accuracy_at_k,
    entity_prf,
    mann_whitney_u,
    ood_accuracy_at_k,
    prf_from_spans,
    token_accuracy,
)
from synthmention.normalize import CandidateList
from synthmention.tagging import EntitySpan, TagSequence, tokenize


def seq(doc_id, labels):
    text = " ".join("tok" for _ in labels)
    return TagSequence(doc_id=doc_id, tokens=tokenize(text), labels=tuple(labels))


def ref_spans(labels, doc_id):
    """Independent maximal-run extractor: quadratic scan over (i, j)."""
    out = set()
    n = len(labels)
    for i in range(n):
        for j in range(i + 1, n + 1):
            run = all(lab == "D" for lab in labels[i:j])
            left_ok = i == 0 or labels[i - 1] == "O"
            right_ok = j == n or labels[j] == "O"
            if run and left_ok and right_ok and j > i:
                out.add(EntitySpan(doc_id, i, j))
    return out


class TestEntityPRF:
    def test_perfect(self):
        gold = [seq("d1", ["O", "D", "D", "O"])]
        r = entity_prf(gold, gold)
        assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)
        assert (r.tp, r.fp, r.fn) == (1, 0, 0)

    def test_boundary_error_is_both_fp_and_fn(self):
        gold = [seq("d1", ["O", "D", "D", "O"])]
        pred = [seq("d1", ["O", "D", "O", "O"])]
        r = entity_prf(gold, pred)
        assert (r.tp, r.fp, r.fn) == (0, 1, 1)
        assert r.f1 == 0.0

    def test_partial_counts(self):
        gold = [seq("d1", ["D", "O", "D", "O", "D"])]
        pred = [seq("d1", ["D", "O", "O", "O", "D"])]
        r = entity_prf(gold, pred)
        assert (r.tp, r.fp, r.fn) == (2, 0, 1)
        assert r.precision == 1.0
        assert r.recall == pytest.approx(2 / 3)
        assert r.f1 == pytest.approx(0.8)

    def test_empty_both_flags_zero_denominator(self):
        gold = [seq("d1", ["O", "O"])]
        r = entity_prf(gold, gold)
        assert r.zero_denominator
        assert r.f1 == 0.0

    def test_misaligned_rejected(self):
        gold = [seq("d1", ["O", "D"])]
        pred = [seq("d2", ["O", "D"])]
        with pytest.raises(DataError):
            entity_prf(gold, pred)

    def test_swap_symmetry(self):
        gold = [seq("d1", ["D", "D", "O", "D"])]
        pred = [seq("d1", ["O", "D", "D", "D"])]
        a = entity_prf(gold, pred)
        b = entity_prf(pred, gold)
        assert a.precision == b.recall and a.recall == b.precision
        assert a.f1 == b.f1

    @given(
        gold_labels=st.lists(st.sampled_from("OD"), min_size=1, max_size=12),
        pred_labels=st.lists(st.sampled_from("OD"), min_size=1, max_size=12),
    )
    @settings(max_examples=200, deadline=None)
    def test_against_quadratic_reference(self, gold_labels, pred_labels):
        n = min(len(gold_labels), len(pred_labels))
        gold_labels, pred_labels = gold_labels[:n], pred_labels[:n]
        gold = [seq("d1", gold_labels)]
        pred = [seq("d1", pred_labels)]
        r = entity_prf(gold, pred)
        g = ref_spans(gold_labels, "d1")
        p = ref_spans(pred_labels, "d1")
        assert r.tp == len(g & p)
        assert r.fp == len(p - g)
        assert r.fn == len(g - p)


class TestTokenAccuracy:
    def test_exact(self):
        gold = [seq("d1", ["O", "D", "D", "O"])]
        pred = [seq("d1", ["O", "D", "O", "O"])]
        assert token_accuracy(gold, pred) == 0.75

    def test_identity(self):
        gold = [seq("d1", ["O", "D"]), seq("d2", ["D"])]
        assert token_accuracy(gold, gold) == 1.0


def cands(query_id, cuis_scores):
    return CandidateList(query_id=query_id, ranked=tuple(cuis_scores))


class TestAccuracyAtK:
    PREDS = [
        cands("q1", [("C1", 0.9), ("C2", 0.5)]),
        cands("q2", [("C3", 0.8), ("C4", 0.4)]),
    ]
    GOLD = [("q1", "C1"), ("q2", "C4")]

    def test_values(self):
        out = accuracy_at_k(self.GOLD, self.PREDS, [1, 2])
        assert out[0].value == 0.5
        assert out[1].value == 1.0
        assert out[0].evaluated_count == 2

    def test_k_beyond_list_length(self):
        out = accuracy_at_k(self.GOLD, self.PREDS, [2, 50])
        assert out[0].value == out[1].value

    def test_missing_candidate_list(self):
        with pytest.raises(DataError):
            accuracy_at_k([("ghost", "C1")], self.PREDS, [1])

    def test_duplicate_gold_query(self):
        with pytest.raises(DataError):
            accuracy_at_k([("q1", "C1"), ("q1", "C2")], self.PREDS, [1])

    def test_empty_gold_gives_none(self):
        out = accuracy_at_k([], [], [1])
        assert out[0].value is None and out[0].evaluated_count == 0

    @given(
        depth=st.integers(min_value=1, max_value=6),
        gold_pos=st.integers(min_value=0, max_value=7),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_k(self, depth, gold_pos):
        ranked = [(f"C{i}", 1.0 - i / 10) for i in range(depth)]
        preds = [cands("q", ranked)]
        gold = [("q", f"C{gold_pos}")]
        ks = list(range(1, depth + 2))
        values = [a.value for a in accuracy_at_k(gold, preds, ks)]
        assert values == sorted(values)


class TestOodAccuracyAtK:
    def test_all_in_train_gives_none(self):
        preds = [cands("q1", [("C1", 1.0)])]
        out = ood_accuracy_at_k([("q1", "C1")], preds, {"C1"}, [1])
        assert out[0].value is None and out[0].evaluated_count == 0

    def test_restricts_to_ood_queries(self):
        preds = [
            cands("q1", [("C1", 1.0)]),
            cands("q2", [("C9", 1.0), ("C2", 0.5)]),
        ]
        gold = [("q1", "C1"), ("q2", "C2")]
        out = ood_accuracy_at_k(gold, preds, {"C1"}, [1, 2])
        assert out[0].evaluated_count == 1
        assert out[0].value == 0.0
        assert out[1].value == 1.0


# -- Mann-Whitney ------------------------------------------------------------

@lru_cache(maxsize=None)
def count_u(n, m, u):
    """Number of arrangements with U_a exactly u, by the standard
    recurrence f(n, m, u) = f(n-1, m, u-m) + f(n, m-1, u)."""
    if u < 0:
        return 0
    if n == 0 or m == 0:
        return 1 if u == 0 else 0
    return count_u(n - 1, m, u - m) + count_u(n, m - 1, u)


def ref_exact_p(n, m, u_min):
    total = math.comb(n + m, n)
    at_most = sum(count_u(n, m, u) for u in range(int(u_min) + 1))
    return min(1.0, 2 * at_most / total)


def ref_u_min(a, b):
    u_a = sum(1 for x in a for y in b if x > y) + 0.5 * sum(
        1 for x in a for y in b if x == y
    )
    return min(u_a, len(a) * len(b) - u_a)


class TestMannWhitney:
    def test_disjoint_small_samples(self):
        r = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert r.method == "exact"
        assert r.u_statistic == 0
        assert r.p_value == pytest.approx(0.1)
        assert not r.significant

    def test_five_vs_five_extremes(self):
        r = mann_whitney_u([1, 2, 3, 4, 5], [6, 7, 8, 9, 10])
        assert r.method == "exact"
        assert r.p_value == pytest.approx(2 / 252)
        assert r.significant

    def test_symmetry(self):
        a, b = [1.0, 3.0, 5.0], [2.0, 4.0, 9.0]
        ra = mann_whitney_u(a, b)
        rb = mann_whitney_u(b, a)
        assert ra.u_statistic == rb.u_statistic
        assert ra.p_value == rb.p_value

    def test_identical_large_samples_near_one(self):
        a = [float(i) for i in range(20)]
        b = [float(i) + 0.5 for i in range(20)]
        # interleaved samples: U near n*m/2, p near 1
        r = mann_whitney_u(a, b)
        assert r.method == "normal_approx"
        assert r.p_value > 0.7
        assert not r.significant

    def test_ties_force_normal_approx(self):
        r = mann_whitney_u([1.0, 2.0], [2.0, 3.0])
        assert r.method == "normal_approx"

    def test_empty_sample_rejected(self):
        with pytest.raises(DataError):
            mann_whitney_u([], [1.0])

    def test_exact_matches_recurrence_oracle_all_small_sizes(self):
        for n in range(1, 7):
            for m in range(1, 7):
                a = [float(10 * i + 1) for i in range(n)]
                b = [float(10 * i + 5) for i in range(m)]
                r = mann_whitney_u(a, b)
                assert r.method == "exact"
                assert r.p_value == pytest.approx(
                    ref_exact_p(n, m, ref_u_min(a, b))
                ), (n, m)

    @given(
        data=st.lists(
            st.integers(min_value=0, max_value=10_000),
            min_size=12,
            max_size=12,
            unique=True,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_exact_matches_oracle_on_random_splits(self, data):
        a = [float(v) for v in data[:6]]
        b = [float(v) for v in data[6:]]
        r = mann_whitney_u(a, b)
        assert r.method == "exact"
        assert r.p_value == pytest.approx(ref_exact_p(6, 6, ref_u_min(a, b)))

    def test_exact_close_to_normal_at_boundary(self, rng):
        # n = m = 8 sits on the exact/normal boundary; the two methods
        # should agree to within a small absolute tolerance
        for _ in range(50):
            vals = rng.permutation(1000)[:17].astype(float)
            a, b8 = list(vals[:8]), list(vals[8:16])
            b9 = list(vals[8:])  # 9 values: forces normal approximation
            exact = mann_whitney_u(a, b8)
            assert exact.method == "exact"
            approx = mann_whitney_u(a, b9)
            assert approx.method == "normal_approx"
        # direct comparison on one fixed boundary case
        a = [1.0, 4.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0]
        b = [2.0, 3.0, 7.0, 10.0, 13.0, 16.0, 19.0, 22.0]
        exact = mann_whitney_u(a, b)
        mean = 8 * 8 / 2
        var = 8 * 8 * (8 + 8 + 1) / 12
        z = (exact.u_statistic - mean + 0.5) / math.sqrt(var)
        normal_p = min(1.0, 2 * 0.5 * (1 + math.erf(z / math.sqrt(2))))
        assert exact.p_value == pytest.approx(normal_p, abs=0.02)


class TestPrfFromSpans:
    def test_disjoint(self):
        g = {EntitySpan("d", 0, 1)}
        p = {EntitySpan("d", 1, 2)}
        r = prf_from_spans(g, p)
        assert (r.tp, r.fp, r.fn) == (0, 1, 1)

    def test_empty_pred_only(self):
        r = prf_from_spans({EntitySpan("d", 0, 1)}, set())
        assert r.zero_denominator and r.recall == 0.0
