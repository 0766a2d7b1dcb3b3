"""Mask and position-id construction, oracle equivalence, exports."""

import numpy as np
import pytest

from paratrace import (StructureError, build_attention_mask, build_position_ids,
                       mask_from_spans_oracle, topology_stats)
from conftest import (E1, E1_POSITIONS, assert_topology_invariants,
                      e1_expected_mask, make_corpus)


class TestPositions:
    def test_e1_fixture(self, e1):
        assert build_position_ids(e1) == E1_POSITIONS

    def test_tagless_sequential(self):
        assert build_position_ids(["a", "b", "c", "d", "e"]) == [0, 1, 2, 3, 4]

    def test_single_step_block_is_sequential(self):
        tokens = ["<guideline>", "<plan>", "p", "</plan>", "</guideline>",
                  "<step>", "x", "y", "</step>", "<takeaway>", "t", "</takeaway>"]
        assert build_position_ids(tokens) == list(range(len(tokens)))

    def test_positions_are_ints(self, e1):
        assert all(isinstance(p, int) for p in build_position_ids(e1))

    def test_structure_error_on_unbalanced(self, e1):
        with pytest.raises(StructureError):
            build_position_ids(e1[:-1])

    def test_non_category1_faults_still_build(self, e1):
        # A block without plans is balanced, so topology is still defined.
        tokens = [t for i, t in enumerate(e1) if not 1 <= i <= 6]
        assert build_position_ids(tokens) is not None


class TestMask:
    def test_e1_fixture_bit_for_bit(self, e1):
        assert np.array_equal(build_attention_mask(e1).dense(), e1_expected_mask())

    def test_e1_spot_checks(self, e1):
        mask = build_attention_mask(e1)
        assert not mask.is_visible(13, 9)   # step 2 cannot see step 1
        assert mask.is_visible(16, 9)       # takeaway sees step 1
        assert mask.is_visible(16, 13)      # takeaway sees step 2
        assert not mask.is_visible(9, 13)   # causality

    def test_tagless_causal(self):
        tokens = ["a", "b", "c"]
        assert np.array_equal(build_attention_mask(tokens).dense(),
                              np.tril(np.ones((3, 3), dtype=bool)))

    def test_structure_error_on_unbalanced(self, e1):
        with pytest.raises(StructureError):
            build_attention_mask(["</step>"] + e1)

    def test_additive_view(self, e1):
        add = build_attention_mask(e1).additive()
        assert add[13, 9] == -np.inf
        assert add[16, 9] == 0.0

    def test_coords_export(self, e1):
        data = build_attention_mask(e1).to_coords_dict()
        assert data["length"] == len(e1)
        rects = {(tuple(r["row_span"]), tuple(r["col_span"])) for r in data["blocked"]}
        assert ((8, 12), (12, 15)) in {(a, b) for a, b in rects}
        assert ((12, 15), (8, 12)) in {(a, b) for a, b in rects}

    def test_dense_bitset_export(self):
        tokens = ["a", "b", "c"]
        raw = build_attention_mask(tokens).to_dense_bytes()
        # Rows: 100, 110, 111 -> flat bits 1,0,0,1,1,0,1,1,1 LSB-first.
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
        assert list(bits[:9]) == [1, 0, 0, 1, 1, 0, 1, 1, 1]


class TestOracle:
    def test_e1_equivalence(self, e1):
        assert build_attention_mask(e1).same_visibility(mask_from_spans_oracle(e1))

    def test_tagless_equivalence(self):
        tokens = ["a", "b"]
        assert build_attention_mask(tokens).same_visibility(mask_from_spans_oracle(tokens))

    def test_random_docs_equivalence(self):
        for tokens in make_corpus(100, seed=3, max_depth=2):
            streaming = build_attention_mask(tokens)
            oracle = mask_from_spans_oracle(tokens)
            assert streaming.same_visibility(oracle), tokens

    def test_oracle_rejects_unbalanced(self, e1):
        with pytest.raises(StructureError):
            mask_from_spans_oracle(e1[:-1])


class TestStats:
    def test_e1(self, e1):
        stats = topology_stats(e1)
        assert stats.total_tokens == 18
        assert stats.critical_path == 15
        assert stats.compression_ratio == pytest.approx(1.2)
        assert stats.blocks[0].branch_count == 2
        assert stats.blocks[0].longest_step == 4

    @staticmethod
    def forked_doc(branches: int, prefix_len: int = 4, step_len: int = 5,
                   tail_len: int = 3) -> list[str]:
        """Prefix + B identical steps + tail, in canonical tight form."""
        assert prefix_len >= 4 and step_len >= 2 and tail_len >= 2
        prefix = (["<guideline>", "<plan>"]
                  + ["p"] * (prefix_len - 4)
                  + ["</plan>", "</guideline>"])
        step = ["<step>"] + ["s"] * (step_len - 2) + ["</step>"]
        tail = ["<takeaway>"] + ["t"] * (tail_len - 2) + ["</takeaway>"]
        return prefix + step * branches + tail

    def test_three_branch_closed_form(self):
        tokens = self.forked_doc(branches=3, prefix_len=4, step_len=5, tail_len=3)
        stats = topology_stats(tokens)
        assert stats.total_tokens == 22
        assert stats.critical_path == 12
        assert stats.compression_ratio == pytest.approx(22 / 12, abs=1e-12)

    def test_speedup_monotone_in_branch_count(self):
        ratios = [topology_stats(self.forked_doc(b)).compression_ratio
                  for b in range(1, 7)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_purely_sequential(self):
        stats = topology_stats(["a", "b", "c"])
        assert stats.compression_ratio == 1.0
        assert stats.blocks == ()

    def test_empty(self):
        stats = topology_stats([])
        assert stats.total_tokens == 0
        assert stats.compression_ratio == 1.0


class TestJointInvariants:
    def test_e1(self, e1):
        assert_topology_invariants(e1)

    def test_small_corpus(self):
        for tokens in make_corpus(100, seed=7, max_depth=2):
            assert_topology_invariants(tokens)

    def test_nested_fixture(self, e1):
        nested = e1[:11] + list(E1) + e1[11:]
        assert_topology_invariants(nested)
