import struct

import numpy as np
import pytest

from offroadnav import smap
from offroadnav.errors import FormatError
from offroadnav.perception import LabelMask, ScoreMap


def test_mask_round_trip(tmp_path):
    ids = np.random.default_rng(0).integers(0, 3, (9, 11))
    m = LabelMask(("other", "road", "sandy road"), ids)
    smap.save(tmp_path / "m.smap", m)
    assert smap.load(tmp_path / "m.smap") == m


def test_score_map_round_trip_within_f32():
    rng = np.random.default_rng(1)
    raw = rng.random((3, 8, 10))
    sm = ScoreMap(("other", "road", "grass"), raw / raw.sum(axis=0))
    back = smap.loads(smap.dumps(sm))
    assert back.labels == sm.labels
    np.testing.assert_allclose(back.scores, sm.scores, atol=1e-6)


def test_header_layout():
    m = LabelMask(("other", "ré"), np.zeros((8, 9), int))
    data = smap.dumps(m)
    assert data[:4] == b"SMAP"
    assert struct.unpack_from("<HHHB", data, 4) == (1, 9, 8, 2)
    assert data[11:21] == b"\x05other\x03r\xc3\xa9"
    assert len(data) == 11 + 10 + 72


def test_load_mask_takes_argmax_of_scores(tmp_path):
    ids = np.random.default_rng(2).integers(0, 2, (8, 8))
    sm = ScoreMap.from_class_ids(("other", "road"), ids, 0.9)
    smap.save(tmp_path / "s.smap", sm)
    assert np.array_equal(smap.load_mask(tmp_path / "s.smap").class_ids, ids)


@pytest.mark.parametrize("data", [
    b"SMA",
    b"XXXX" + struct.pack("<HHHB", 1, 8, 8, 1) + b"\x05other" + bytes(64),
    b"SMAP" + struct.pack("<HHHB", 2, 8, 8, 1) + b"\x05other" + bytes(64),
    b"SMAP" + struct.pack("<HHHB", 1, 8, 8, 1) + b"\x05other" + bytes(63),
    b"SMAP" + struct.pack("<HHHB", 1, 8, 8, 2) + b"\x05other",
])
def test_malformed_containers(data):
    with pytest.raises(FormatError):
        smap.loads(data)
