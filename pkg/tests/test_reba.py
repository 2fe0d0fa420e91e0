import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergoseg.errors import ActionMissing, TableFormatError, TooShort
from ergoseg.kinematics import PostureAngles
from ergoseg.labels import AnnotationTrack, LabelSet, Span
from ergoseg.reba import (
    TABLES_ENV,
    Adjustments,
    FrameScore,
    PartScores,
    RiskCategory,
    Thresholds,
    aggregate_median,
    aggregate_resample_max,
    default_tables,
    downsample_to_100,
    frame_reba,
    load_tables,
    parse_tables,
    risk_category,
    score_frames,
    score_parts,
)

# Worksheet tables typed in independently of the packaged table file.
TABLE_A = {  # [trunk][neck] -> legs 1..4
    1: [[1, 2, 3, 4], [1, 2, 3, 4], [3, 3, 5, 6]],
    2: [[2, 3, 4, 5], [3, 4, 5, 6], [4, 5, 6, 7]],
    3: [[2, 4, 5, 6], [4, 5, 6, 7], [5, 6, 7, 8]],
    4: [[3, 5, 6, 7], [5, 6, 7, 8], [6, 7, 8, 9]],
    5: [[4, 6, 7, 8], [6, 7, 8, 9], [7, 8, 9, 9]],
}
TABLE_B = {  # [upper arm][lower arm] -> wrist 1..3
    1: [[1, 2, 2], [1, 2, 3]],
    2: [[1, 2, 3], [2, 3, 4]],
    3: [[3, 4, 5], [4, 5, 5]],
    4: [[4, 5, 5], [5, 6, 7]],
    5: [[6, 7, 8], [7, 8, 8]],
    6: [[7, 8, 8], [8, 9, 9]],
}
TABLE_C = [
    [1, 1, 1, 2, 3, 3, 4, 5, 6, 7, 7, 7],
    [1, 2, 2, 3, 4, 4, 5, 6, 6, 7, 7, 8],
    [2, 3, 3, 3, 4, 5, 6, 7, 7, 8, 8, 8],
    [3, 4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9],
    [4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9, 9],
    [6, 6, 6, 7, 8, 8, 9, 9, 10, 10, 10, 10],
    [7, 7, 7, 8, 9, 9, 9, 10, 10, 11, 11, 11],
    [8, 8, 8, 9, 10, 10, 10, 10, 10, 11, 11, 11],
    [9, 9, 9, 10, 10, 10, 11, 11, 11, 12, 12, 12],
    [10, 10, 10, 11, 11, 11, 11, 12, 12, 12, 12, 12],
    [11, 11, 11, 11, 12, 12, 12, 12, 12, 12, 12, 12],
    [12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12],
]


def oracle_parts(a: PostureAngles, zero=5.0, binary=10.0, abduction=30.0) -> PartScores:
    """Worksheet rules written as plain if-chains."""
    def near_zero(x):
        return abs(x) < zero

    f = a.trunk_flexion
    if near_zero(f):
        trunk = 1
    elif -20 <= f < 20:
        trunk = 2
    elif f < -20 or 20 <= f < 60:
        trunk = 3
    else:
        trunk = 4
    if a.trunk_twist >= binary or a.trunk_side_flexion >= binary:
        trunk += 1
    n = a.neck_flexion
    neck = 1 if near_zero(n) or 0 <= n < 20 else 2
    if a.trunk_twist >= binary:
        neck += 1

    def knee(k):
        if near_zero(k) or k < 30:
            return 0
        return 1 if k < 60 else 2

    legs = 1 + max(knee(a.knee_flexion_left), knee(a.knee_flexion_right))

    def upper(u, abd):
        if near_zero(u) or -20 <= u < 20:
            s = 1
        elif u < -20 or u < 45:
            s = 2
        elif u < 90:
            s = 3
        else:
            s = 4
        return s + (abd >= abduction)

    def lower(e):
        return 1 if 60 <= e < 100 and not near_zero(e) else 2

    def wrist(w):
        return 1 if near_zero(w) or w < 15 else 2

    return PartScores(
        trunk=min(trunk, 5), neck=min(neck, 3), legs=min(legs, 4),
        upper_arm=min(6, max(upper(a.upper_arm_flexion_left, a.shoulder_abduction_left),
                             upper(a.upper_arm_flexion_right, a.shoulder_abduction_right))),
        lower_arm=max(lower(a.lower_arm_flexion_left), lower(a.lower_arm_flexion_right)),
        wrist=max(wrist(a.wrist_flexion_left), wrist(a.wrist_flexion_right)),
    )


def oracle_score(p: PartScores, adj=Adjustments()) -> int:
    sa = TABLE_A[p.trunk][p.neck - 1][p.legs - 1] + adj.load_score
    sb = TABLE_B[p.upper_arm][p.lower_arm - 1][p.wrist - 1] + adj.coupling_score
    return min(15, TABLE_C[sa - 1][sb - 1] + adj.activity_score)


signed = st.floats(-180, 180)
unsigned = st.floats(0, 180)
angles_strategy = st.builds(
    PostureAngles,
    trunk_flexion=signed, trunk_side_flexion=unsigned, trunk_twist=unsigned, neck_flexion=signed,
    knee_flexion_left=unsigned, knee_flexion_right=unsigned,
    upper_arm_flexion_left=signed, upper_arm_flexion_right=signed,
    shoulder_abduction_left=unsigned, shoulder_abduction_right=unsigned,
    lower_arm_flexion_left=unsigned, lower_arm_flexion_right=unsigned,
    wrist_flexion_left=unsigned, wrist_flexion_right=unsigned,
)


# --- tables ---------------------------------------------------------------------

def test_packaged_tables_match_worksheet():
    t = default_tables()
    for trunk in range(1, 6):
        for neck in range(1, 4):
            for legs in range(1, 5):
                assert t.table_a[neck - 1, legs - 1, trunk - 1] == TABLE_A[trunk][neck - 1][legs - 1]
    for ua in range(1, 7):
        for la in range(1, 3):
            for w in range(1, 4):
                assert t.table_b[la - 1, w - 1, ua - 1] == TABLE_B[ua][la - 1][w - 1]
    np.testing.assert_array_equal(t.table_c, TABLE_C)


def test_table_c_is_monotone():
    c = default_tables().table_c
    assert np.all(np.diff(c, axis=0) >= 0) and np.all(np.diff(c, axis=1) >= 0)


def test_incomplete_table_is_rejected():
    text = default_tables_text().replace("\n12 12 = 12", "\n")
    with pytest.raises(TableFormatError):
        parse_tables(text)


def default_tables_text() -> str:
    from importlib import resources

    return resources.files("ergoseg.data").joinpath("reba_tables.txt").read_text()


def test_env_override(tmp_path, monkeypatch):
    # a table file where every Table C cell is 12
    lines = []
    section = None
    for line in default_tables_text().splitlines():
        stripped = line.strip()
        if stripped.startswith("["):
            section = stripped
        elif section == "[table_c]" and "=" in stripped and not stripped.startswith("#"):
            line = stripped.split("=")[0] + "= 12"
        lines.append(line)
    path = tmp_path / "tables.txt"
    path.write_text("\n".join(lines) + "\n")
    monkeypatch.setenv(TABLES_ENV, str(path))
    t = load_tables()
    assert frame_reba(score_parts(PostureAngles(), tables=t), tables=t).value == 12
    monkeypatch.delenv(TABLES_ENV)
    assert load_tables().source != str(path)


# --- part scores ------------------------------------------------------------------

def test_neutral_parts():
    assert score_parts(PostureAngles()) == PartScores(1, 1, 1, 1, 2, 1)
    assert frame_reba(score_parts(PostureAngles())).value == 1


def test_sub_threshold_trunk():
    assert score_parts(PostureAngles(trunk_flexion=3)).trunk == 1


def test_twist_modifier():
    assert score_parts(PostureAngles(trunk_flexion=30, trunk_twist=15)).trunk == 4


def test_table_lookup_example():
    parts = PartScores(trunk=4, neck=2, legs=2, upper_arm=1, lower_arm=1, wrist=1)
    expected = TABLE_C[TABLE_A[4][1][1] - 1][TABLE_B[1][0][0] - 1]
    assert frame_reba(parts).value == expected


@settings(max_examples=500, deadline=None)
@given(angles_strategy)
def test_parts_match_oracle(a):
    assert score_parts(a) == oracle_parts(a)


@settings(max_examples=200, deadline=None)
@given(angles_strategy, st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))
def test_frame_score_matches_oracle(a, load, coupling, activity):
    adj = Adjustments(load, coupling, activity)
    parts = score_parts(a)
    value = frame_reba(parts, adj).value
    assert value == oracle_score(parts, adj)
    assert 1 <= value <= 15


@settings(max_examples=100, deadline=None)
@given(angles_strategy)
def test_activity_adds_and_caps(a):
    parts = score_parts(a)
    base = frame_reba(parts).value
    assert frame_reba(parts, Adjustments(activity_score=3)).value == min(15, base + 3)


@settings(max_examples=100, deadline=None)
@given(angles_strategy, st.lists(st.floats(0, 180), min_size=2, max_size=10))
def test_trunk_flexion_monotone(a, mags):
    from dataclasses import replace

    for sign in (1, -1):
        values = [frame_reba(score_parts(replace(a, trunk_flexion=sign * m))).value for m in sorted(mags)]
        assert all(x <= y for x, y in zip(values, values[1:]))


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_sub_threshold_is_neutral(data):
    t = Thresholds()
    small = lambda lim: st.floats(-lim, lim, exclude_min=True, exclude_max=True)  # noqa: E731
    pos = lambda lim: st.floats(0, lim, exclude_max=True)  # noqa: E731
    a = PostureAngles(
        trunk_flexion=data.draw(small(t.zero)), trunk_side_flexion=data.draw(pos(t.binary)),
        trunk_twist=data.draw(pos(t.binary)), neck_flexion=data.draw(small(t.zero)),
        knee_flexion_left=data.draw(pos(t.zero)), knee_flexion_right=data.draw(pos(t.zero)),
        upper_arm_flexion_left=data.draw(small(t.zero)), upper_arm_flexion_right=data.draw(small(t.zero)),
        shoulder_abduction_left=data.draw(pos(t.abduction)), shoulder_abduction_right=data.draw(pos(t.abduction)),
        lower_arm_flexion_left=data.draw(pos(t.zero)), lower_arm_flexion_right=data.draw(pos(t.zero)),
        wrist_flexion_left=data.draw(pos(t.zero)), wrist_flexion_right=data.draw(pos(t.zero)),
    )
    assert score_parts(a) == score_parts(PostureAngles())


def test_worse_side_is_kept():
    a = PostureAngles(upper_arm_flexion_left=100, upper_arm_flexion_right=0)
    assert score_parts(a).upper_arm == 4
    assert score_parts(PostureAngles(upper_arm_flexion_right=100)).upper_arm == 4


def test_threshold_validation():
    with pytest.raises(ValueError):
        Thresholds(zero=0)
    with pytest.raises(ValueError):
        Thresholds(binary=20, abduction=10)
    with pytest.raises(ValueError):
        Adjustments(load_score=4)


# --- risk categories ------------------------------------------------------------------

@pytest.mark.parametrize("score,cat", [
    (1, RiskCategory.LOW), (2, RiskCategory.LOW), (2.99, RiskCategory.LOW), (3, RiskCategory.MEDIUM),
    (5, RiskCategory.MEDIUM), (7, RiskCategory.MEDIUM), (7.5, RiskCategory.HIGH),
    (8, RiskCategory.HIGH), (9, RiskCategory.HIGH), (15, RiskCategory.HIGH),
])
def test_risk_category(score, cat):
    assert risk_category(score) is cat


# --- aggregation -----------------------------------------------------------------------

def test_median_single_participant():
    out = aggregate_median([([2, 3, 3, 5], [0, 0, 0, 0])])
    assert out[0].score == 3 and out[0].category is RiskCategory.MEDIUM


def test_median_across_participants():
    videos = [([3, 3], [0, 0]), ([3], [0]), ([9, 9, 9], [0, 0, 0])]
    assert aggregate_median(videos)[0].score == 3


def test_median_even_count_uses_midpoint():
    out = aggregate_median([([2, 3], [0, 0])])
    assert out[0].score == 2.5 and out[0].category is RiskCategory.LOW


def test_median_accepts_tracks_and_frame_scores():
    labels = LabelSet(["A", "B"])
    track = AnnotationTrack((Span(0, 1, labels.labels[0]), Span(2, 3, labels.labels[1])), 4, labels)
    scores = [FrameScore(v, PartScores(1, 1, 1, 1, 1, 1)) for v in (1, 2, 8, 9)]
    out = aggregate_median([(scores, track)])
    assert out[0].category is RiskCategory.LOW and out[1].score == 8.5


def test_missing_action():
    with pytest.raises(ActionMissing):
        aggregate_median([([1, 2], [0, 0])], expected=[0, 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.tuples(st.integers(1, 15), st.integers(0, 2)), min_size=1, max_size=30),
                min_size=1, max_size=5), st.randoms())
def test_median_permutation_invariance(videos, rnd):
    pairs = [([s for s, _ in v], [a for _, a in v]) for v in videos]
    base = aggregate_median(pairs)
    shuffled = []
    for scores, ids in pairs:
        order = list(range(len(scores)))
        rnd.shuffle(order)
        shuffled.append(([scores[i] for i in order], [ids[i] for i in order]))
    rnd.shuffle(shuffled)
    assert aggregate_median(shuffled) == base


def test_downsample_examples():
    assert downsample_to_100(list(range(1000))) == list(range(0, 1000, 10))
    assert downsample_to_100(list(range(100))) == list(range(100))
    assert downsample_to_100(list(range(250))) == list(range(0, 200, 2))
    with pytest.raises(TooShort):
        downsample_to_100(list(range(99)))


@given(st.integers(100, 5000))
def test_downsample_length_and_order(n):
    out = downsample_to_100(list(range(n)))
    assert len(out) == 100 and out == sorted(out)


def test_resample_max():
    v1 = ([4] * 100 + [2] * 100, [0] * 100 + [1] * 100)
    v2 = ([5] * 200, [0] * 200)
    out = aggregate_resample_max([v1, v2])
    assert out[0].score == 5 and out[1].score == 2


def test_resample_max_takes_max_of_averages():
    v1 = ([4] * 80 + [5] * 20, [0] * 100)  # average 4.2
    v2 = ([5] * 90 + [6] * 10, [0] * 100)  # average 5.1
    assert aggregate_resample_max([v1, v2])[0].score == pytest.approx(5.1)


def test_score_frames_per_frame_adjustments():
    frames = [PostureAngles(), PostureAngles()]
    out = score_frames(frames, adjustments=[Adjustments(), Adjustments(activity_score=2)])
    assert [f.value for f in out] == [1, 3]

