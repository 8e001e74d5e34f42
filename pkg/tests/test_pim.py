import numpy as np
import pytest
from hypothesis import given, strategies as st

from pimsim.memtypes import AGG_BASE, FIELD_STRIDE, MASK_BASE, Opcode, PimOpDescriptor
from pimsim.pim import PimOperandError, ScopeImage, load_images, save_images
from pimsim.workloads import _RefScope

R = 128

op = st.one_of(
    st.builds(lambda o, f, imm, d: PimOpDescriptor(0, o, f, imm, d),
              st.sampled_from([Opcode.FILTER_EQ, Opcode.FILTER_LT]), st.integers(0, 4),
              st.integers(0, 40), st.integers(0, 7)),
    st.builds(lambda o, a, b, d: PimOpDescriptor(0, o, dst=d, src_masks=(a, b)),
              st.sampled_from([Opcode.MASK_AND, Opcode.MASK_OR]), st.integers(0, 7), st.integers(0, 7),
              st.integers(0, 7)),
    st.builds(lambda a, d: PimOpDescriptor(0, Opcode.MASK_NOT, dst=d, src_masks=(a,)),
              st.integers(0, 7), st.integers(0, 7)),
    st.builds(lambda f, a, d: PimOpDescriptor(0, Opcode.AGGREGATE, f, dst=d, src_masks=(a,)),
              st.integers(0, 4), st.integers(0, 7), st.integers(0, 7)),
)


def _image(seed):
    img = ScopeImage(R)
    img.fields[:] = np.random.default_rng(seed).integers(0, 40, size=img.fields.shape, dtype=np.uint64)
    return img


@given(st.integers(0, 1000), st.lists(op, max_size=12))
def test_image_agrees_with_reference(seed, ops):
    img = _image(seed)
    ref = _RefScope(img)
    for d in ops:
        img.execute(d)
        ref.apply(d)
    assert ref.matches(img)
    for off in (MASK_BASE, MASK_BASE + 8, MASK_BASE + 4096 + 64 * 3, AGG_BASE + 64 * 2, FIELD_STRIDE + 8):
        assert img.read_word(off) == ref.load(off)


@given(st.integers(0, R // 64 - 1), st.integers(0, 7), st.integers(0, 2**64 - 1))
def test_mask_word_round_trip(word, mask, value):
    img = ScopeImage(R)
    off = MASK_BASE + (word // 8) * 4096 + mask * 64 + (word % 8) * 8
    img.write_word(off, value)
    assert img.read_word(off) == value
    assert img.masks[mask, word * 64] == bool(value & 1)


def test_words_outside_regions_are_kept():
    img = ScopeImage(R)
    img.write_word(AGG_BASE + 8, 5)
    img.write_word(FIELD_STRIDE - 8, 6)     # past the last record of field 0
    assert img.read_word(AGG_BASE + 8) == 5 and img.read_word(FIELD_STRIDE - 8) == 6
    img.write_word(AGG_BASE + 8, 0)
    assert img.other == {FIELD_STRIDE - 8: 6}


def test_filter_and_aggregate_semantics():
    img = ScopeImage(64)
    img.fields[0, :] = np.arange(64, dtype=np.uint64)
    img.fields[1, :] = 2
    img.execute(PimOpDescriptor(0, Opcode.FILTER_LT, 0, 10, 3))
    img.execute(PimOpDescriptor(0, Opcode.AGGREGATE, 1, dst=4, src_masks=(3,)))
    assert img.accs[4] == 20
    assert img.read_word(MASK_BASE + 3 * 64) == (1 << 10) - 1


def test_bad_operands_raise():
    with pytest.raises(PimOperandError):
        ScopeImage(64, n_fields=2).execute(PimOpDescriptor(0, Opcode.FILTER_EQ, field_id=3))


def test_record_count_checked():
    for bad in (0, 100, 65536):
        with pytest.raises(ValueError):
            ScopeImage(bad)


def test_images_save_and_load(tmp_path):
    a = _image(3)
    a.execute(PimOpDescriptor(0, Opcode.FILTER_LT, 2, 20, 1))
    a.accs[2] = 77
    a.write_word(AGG_BASE + 16, 9)
    save_images([a], tmp_path / "img.json")
    (b,) = load_images(tmp_path / "img.json")
    assert a.equals(b)
