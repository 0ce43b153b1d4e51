import math

import pytest

import vidfp

RFC_DCID = bytes.fromhex("8394c8f03e515708")


def test_rfc_initial_keys():
    k = vidfp.derive_initial_keys(RFC_DCID)
    assert k["key"].hex() == "1f369613dd76d5467730efcbe3b1a22d"
    assert k["iv"].hex() == "fa044b2f42a3fd3b46fb255c"
    assert k["hp"].hex() == "9f50449e04a0e810283a1e9933adedd2"


def test_errors_carry_codes():
    with pytest.raises(vidfp.VidfpError) as e:
        vidfp.derive_initial_keys(RFC_DCID, version=0xFF00001D)
    assert e.value.code == "quic.UnknownVersionSalt"
    with pytest.raises(vidfp.VidfpError) as e:
        vidfp.mutual_information([1.0, 2.0], [0])
    assert e.value.code == "ranker.LengthMismatch"


def test_mutual_information():
    assert vidfp.mutual_information([3.0] * 8, [0, 1] * 4) == 0.0
    assert math.isclose(vidfp.mutual_information([0.0, 1.0] * 4, [0, 1] * 4), 1.0)
    assert vidfp.tier_for(0.5) == "high"
    assert vidfp.tier_for(0.1) == "medium"
    assert vidfp.quantile_sorted([1, 2, 3, 4, 5], 0.25) == 2


def test_forest_xor():
    rows = [[0, 0], [0, 1], [1, 0], [1, 1]]
    labels = ["even", "odd", "odd", "even"]
    f = vidfp.Forest.train(rows, labels, n_trees=50, max_depth=2, n_attributes=2, seed=3)
    assert [f.predict(r)[0] for r in rows] == labels
    g = vidfp.Forest.from_json(f.to_json())
    assert g.to_json() == f.to_json()
    assert g.n_trees == 50


def test_synth_extract_roundtrip(tmp_path):
    pcap, labels = tmp_path / "s.pcap", tmp_path / "s.csv"
    n = vidfp.synth(str(pcap), str(labels), count=2, seed=4, provider="YT", protocol="QUIC")
    assert n == 24
    flows = vidfp.extract(pcap, labels)
    assert len(flows) == 24
    assert all(f["provider"] == "YT" and "label" in f for f in flows)


def test_loaded_from_staged_build():
    import os

    staged = os.environ.get("VIDFP_STAGED")
    if staged:
        assert os.path.realpath(vidfp.__file__).startswith(os.path.realpath(staged))
