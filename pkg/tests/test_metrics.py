import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfseg.errors import DataError
from selfseg.lattice import Segmentation
from selfseg.metrics import dif_corpus, dif_word, diff_report

A = Segmentation(("watch", "ing"))
B = Segmentation(("wat", "ching"))
C = Segmentation(("watchin", "g"))


class TestDifWord:
    def test_identical_lists(self):
        assert dif_word([A, A], [A, A], 2) == 0.0

    def test_half_disagreement(self):
        assert dif_word([A, A], [A, B], 2) == 0.5

    def test_total_disagreement(self):
        assert dif_word([A], [B], 1) == 1.0

    def test_zero_occurrences_rejected(self):
        with pytest.raises(ValueError):
            dif_word([], [], 0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            dif_word([A], [A, A], 2)

    def test_symmetric(self):
        s1 = [A, B, A]
        s2 = [B, B, C]
        assert dif_word(s1, s2, 3) == dif_word(s2, s1, 3)

    def test_cross_product_counts_all_pairs(self):
        # 3x3 pairs: s1 has {A,A,B}, s2 has {A,C,C}; agreements = 2 (A with A)
        assert dif_word([A, A, B], [A, C, C], 3) == pytest.approx((9 - 2) / 9)

    @given(st.lists(st.sampled_from([A, B, C]), min_size=1, max_size=6), st.data())
    @settings(max_examples=80, deadline=None)
    def test_bounds_and_literal_formula(self, s1, data):
        s2 = data.draw(
            st.lists(st.sampled_from([A, B, C]), min_size=len(s1), max_size=len(s1))
        )
        n = len(s1)
        rate = dif_word(s1, s2, n)
        literal = sum(x != y for x in s1 for y in s2) / n**2
        assert rate == pytest.approx(literal)
        assert 0.0 <= rate <= 1.0


class TestDifCorpus:
    def test_all_zero(self):
        assert dif_corpus({"x": 0.0, "y": 0.0}, {"x": 3, "y": 1}) == 0.0

    def test_equal_weights_mean(self):
        assert dif_corpus({"x": 0.0, "y": 1.0}, {"x": 1, "y": 1}) == 0.5

    def test_frequency_weighting(self):
        assert dif_corpus({"x": 0.0, "y": 1.0}, {"x": 3, "y": 1}) == 0.25

    def test_invariant_under_uniform_scaling(self):
        rates = {"x": 0.2, "y": 0.8, "z": 0.5}
        freqs = {"x": 2, "y": 5, "z": 1}
        scaled = {w: 7 * n for w, n in freqs.items()}
        assert dif_corpus(rates, freqs) == pytest.approx(dif_corpus(rates, scaled))

    def test_zero_total_rejected(self):
        with pytest.raises(ValueError):
            dif_corpus({"x": 0.5}, {"x": 0})

    def test_accepts_frequency_table(self):
        from selfseg.vocab import WordFreqTable

        table = WordFreqTable([("x", 3), ("y", 1)])
        assert dif_corpus({"x": 0.0, "y": 1.0}, table) == 0.25


def lines(*rows):
    return [list(row) for row in rows]


class TestDiffReport:
    def test_identical_consistent_inputs_empty_report(self):
        dog = Segmentation(("do", "g"))
        seg = lines([A, dog], [A])
        report = diff_report(seg, lines([A, dog], [A]))
        assert report.corpus_rate == 0.0
        assert report.diffs == []
        assert "corpus difference rate: 0.000000" in report.to_markdown()

    def test_deterministic_segmenter_self_dif_zero(self):
        # a cached word-level segmenter always emits the same segmentation per word,
        # so comparing it against itself over any corpus gives rate 0
        dog = Segmentation(("do", "g"))
        seg = lines([A, A, dog], [dog, A])
        report = diff_report(seg, seg)
        assert report.corpus_rate == 0.0

    def test_self_comparison_measures_inconsistency(self):
        # the same word segmented two ways within one side has nonzero self-DIF:
        # the metric doubles as a consistency measure
        seg = lines([A, B, A])
        report = diff_report(seg, seg)
        assert report.corpus_rate == pytest.approx((9 - 5) / 9)

    def test_bands_split_at_threshold(self):
        word_a = [Segmentation(("ab",))] * 7
        word_a_alt = [Segmentation(("a", "b"))] * 7
        word_b = [Segmentation(("cd",))]
        word_b_alt = [Segmentation(("c", "d"))]
        seg_a = lines(word_a + word_b)
        seg_b = lines(word_a_alt + word_b_alt)
        report = diff_report(seg_a, seg_b, freq_split=5)
        assert report.high_rate == pytest.approx(1.0)
        assert report.low_rate == pytest.approx(1.0)
        bands = {d.word: d.band(5) for d in report.diffs}
        assert bands == {"ab": "frequent", "cd": "one-shot"}

    def test_rare_band(self):
        word = [Segmentation(("ab",))] * 3
        alt = [Segmentation(("a", "b"))] * 3
        report = diff_report(lines(word), lines(alt), freq_split=5)
        assert report.diffs[0].band(5) == "rare"

    def test_word_mismatch_rejected(self):
        with pytest.raises(DataError):
            diff_report(lines([A]), lines([B, B]))
        with pytest.raises(DataError):
            diff_report(lines([A]), lines([Segmentation(("x",))]))

    def test_csv_and_markdown_contain_pairs(self):
        seg_a = lines([Segmentation(("dam", "aged"))])
        seg_b = lines([Segmentation(("damage", "d"))])
        report = diff_report(seg_a, seg_b)
        assert "dam+aged" in report.to_csv()
        assert "damage+d" in report.to_csv()
        assert "| damaged | 1 |" in report.to_markdown()

    def test_marker_rendering_irrelevant_to_equality(self):
        # equality is boundary equality on the segment tuple, nothing else
        assert Segmentation(("watch", "ing")) == Segmentation(("watch", "ing"))
        assert Segmentation(("watch", "ing")) != Segmentation(("watchi", "ng"))
