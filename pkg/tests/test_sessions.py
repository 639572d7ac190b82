import pytest
from hypothesis import given
from hypothesis import strategies as st

from crosslog.errors import InvalidPattern, InvalidWindow
from crosslog.sessions import (
    Domain,
    DomainPool,
    Label,
    Session,
    attach_labels,
    read_labels,
    read_sessions,
    sessionize_by_key,
    sessionize_fixed_window,
    split_sessions,
    strip_labels,
    write_labels,
    write_sessions,
)

BLK = r"(blk_\d+)"


def test_by_key_groups_in_order():
    records = [(10, "recv blk_1"), (11, "recv blk_2"), (12, "done blk_1")]
    sessions = sessionize_by_key(records, BLK)
    assert [(s.key, s.events) for s in sessions] == [("blk_1", [10, 12]), ("blk_2", [11])]


def test_by_key_empty_stream():
    assert sessionize_by_key([], BLK) == []


def test_by_key_drops_keyless_lines():
    assert [s.key for s in sessionize_by_key([(1, "no key here"), (2, "blk_9 ok")], BLK)] == ["blk_9"]


@pytest.mark.parametrize("pattern", [r"blk_\d+", r"(a)(b)", r"(unclosed"])
def test_by_key_bad_pattern(pattern):
    with pytest.raises(InvalidPattern):
        sessionize_by_key([(1, "blk_1")], pattern)


@pytest.mark.parametrize(
    "n, window, stride, sizes",
    [(7, 3, 3, [3, 3, 1]), (5, 10, 10, [5]), (4, 2, 1, [2, 2, 2, 1])],
)
def test_fixed_window(n, window, stride, sizes):
    assert [len(s.events) for s in sessionize_fixed_window(range(n), window, stride)] == sizes


@pytest.mark.parametrize("window, stride", [(0, 1), (1, 0)])
def test_fixed_window_invalid(window, stride):
    with pytest.raises(InvalidWindow):
        sessionize_fixed_window([1, 2], window, stride)


@given(n=st.integers(1, 60), window=st.integers(1, 12))
def test_tumbling_windows_cover_every_record_once(n, window):
    sessions = sessionize_fixed_window(range(n), window, window)
    assert [e for s in sessions for e in s.events] == list(range(n))


def test_session_requires_events():
    with pytest.raises(ValueError):
        Session([])


def test_pool_rejects_labeled_target():
    src = [Session([1], Domain.SOURCE, Label.NORMAL, "a")]
    with pytest.raises(ValueError):
        DomainPool(src, [Session([2], Domain.TARGET, Label.NORMAL, "b")])
    with pytest.raises(ValueError):
        DomainPool([Session([1], Domain.SOURCE, None, "a")], [])
    DomainPool(src, [Session([2], Domain.TARGET, None, "b")])


def test_attach_and_strip_labels():
    sessions = [Session([1], Domain.TARGET, None, "k")]
    labeled = attach_labels(sessions, {"k": 1})
    assert labeled[0].label is Label.ANOMALOUS
    assert sessions[0].label is None
    assert strip_labels(labeled)[0].label is None
    with pytest.raises(KeyError):
        attach_labels([Session([1], key="missing")], {})


def test_split_is_seeded_and_partitions():
    sessions = [Session([i], key=str(i)) for i in range(10)]
    a1, b1 = split_sessions(sessions, 0.3, 5)
    a2, b2 = split_sessions(sessions, 0.3, 5)
    assert [s.key for s in a1] == [s.key for s in a2]
    assert len(a1) == 3 and len(b1) == 7
    assert {s.key for s in a1} | {s.key for s in b1} == {str(i) for i in range(10)}
    with pytest.raises(ValueError):
        split_sessions(sessions, 1.5, 0)


def test_session_and_label_files_roundtrip(tmp_path):
    sessions = [Session([3, 1, 3], key="blk_1"), Session([2], key="blk_2")]
    write_sessions(tmp_path / "s", sessions)
    assert (tmp_path / "s").read_text() == "blk_1\t3,1,3\nblk_2\t2\n"
    back = read_sessions(tmp_path / "s", Domain.TARGET)
    assert [(s.key, s.events, s.domain) for s in back] == [("blk_1", [3, 1, 3], Domain.TARGET), ("blk_2", [2], Domain.TARGET)]
    write_labels(tmp_path / "l", {"blk_1": 0, "blk_2": 1})
    assert read_labels(tmp_path / "l") == {"blk_1": 0, "blk_2": 1}


def test_malformed_files(tmp_path):
    (tmp_path / "s").write_text("blk_1\tx,y\n")
    with pytest.raises(ValueError, match=":1:"):
        read_sessions(tmp_path / "s")
    (tmp_path / "l").write_text("blk_1\t2\n")
    with pytest.raises(ValueError):
        read_labels(tmp_path / "l")
