import json

import pytest

from pollstrat import ingest
from pollstrat.core import POSTSTRAT_DIMENSIONS, Election
from pollstrat.errors import DistributionInvalid, SchemaMismatch, Unreadable, ValidationError, VersionMismatch
from pollstrat.poststrat import fit

HEADER = ",".join(ingest.POLL_COLUMNS)


def poll_line(pid="p1", created="2020-10-01T12:00:00Z", labels=("Trump", "Biden", "", ""), votes=("60", "40", "", "")):
    return ",".join([pid, "a1", created, "2020", *labels, *votes, "3", "7"])


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_valid_and_post_election(tmp_path):
    path = write(tmp_path, "p.csv", "\n".join([
        HEADER, poll_line("ok"), poll_line("late", "2020-11-04T00:00:00Z"),
        poll_line("eve", "2020-11-03T23:59:59Z"),
    ]) + "\n")
    polls, report = ingest.load_polls(path)
    assert [p.poll_id for p in polls] == ["ok", "eve"]
    (rej,) = report.rejections
    assert rej.line == 3 and rej.key == "late" and "post-election" in rej.reason
    assert report.n_rows == report.n_accepted + len(report.rejections)


def test_five_options_rejected(tmp_path):
    header = HEADER.replace("option_4_votes", "option_4_votes,option_5_label,option_5_votes")
    line = ",".join(["p5", "a1", "2020-10-01T00:00:00Z", "2020", "Trump", "Biden", "C", "D",
                     "1", "2", "3", "4", "E", "5", "0", "0"])
    polls, report = ingest.load_polls(write(tmp_path, "p.csv", f"{header}\n{line}\n"))
    assert polls == []
    assert "option count" in report.rejections[0].reason


@pytest.mark.parametrize("bad,reason", [
    (poll_line(votes=("6.5", "4", "", "")), "integer"),
    (poll_line(votes=("-1", "4", "", "")), "integer"),
    (poll_line(labels=("Trump", "", "Biden", ""), votes=("1", "", "2", "")), "gaps"),
    (poll_line(labels=("Trump", "", "", ""), votes=("1", "", "", "")), "option count"),
    (poll_line().replace(",2020,", ",2012,"), "election"),
    (poll_line() + ",extra", "more fields"),
])
def test_bad_rows_are_reported(tmp_path, bad, reason):
    polls, report = ingest.load_polls(write(tmp_path, "p.csv", f"{HEADER}\n{bad}\n"))
    assert polls == [] and reason in report.rejections[0].reason


def test_empty_file_and_schema(tmp_path):
    polls, report = ingest.load_polls(write(tmp_path, "p.csv", HEADER + "\n"))
    assert polls == [] and report.ok and report.n_rows == 0
    with pytest.raises(SchemaMismatch):
        ingest.load_polls(write(tmp_path, "q.csv", "poll_id,author_id\n"))
    with pytest.raises(SchemaMismatch):
        ingest.load_polls(write(tmp_path, "r.csv", ""))
    with pytest.raises(Unreadable):
        ingest.load_polls(tmp_path / "missing.csv")


def test_duplicates_and_season(tmp_path):
    text = "\n".join([HEADER, poll_line("x"), poll_line("x")]) + "\n"
    polls, report = ingest.load_polls(write(tmp_path, "p.csv", text))
    assert len(polls) == 1 and "duplicate" in report.rejections[0].reason
    polls, report = ingest.load_polls(write(tmp_path, "p.csv", text), Election.Y2016)
    assert polls == [] and len(report.rejections) == 2


def test_attributes(tmp_path):
    text = "\n".join([
        ",".join(ingest.ATTRIBUTE_COLUMNS),
        "u1,retweeter,p1,0.5,0.1,,34,male,CA",
        "u2,favoriter,p1,,,,,,",
        "u3,retweeter,nope,,,,,,",
        "u4,retweeter,p1,4.0,,,,,",
        "u5,lurker,p1,,,,,,",
    ]) + "\n"
    recs, report = ingest.load_attributes(write(tmp_path, "a.csv", text), ["p1"])
    assert [r.user_id for r in recs] == ["u1", "u2"]
    assert recs[0].age_years == 34 and recs[1].gender is None
    assert [r.line for r in report.rejections] == [4, 5, 6]


def test_reference_validation(tmp_path):
    ok = {"schema_version": 1, "election": "2020", "marginals": {"gender": {"male": 0.47, "female": 0.53}}}
    ref = ingest.load_reference(write(tmp_path, "r.json", json.dumps(ok)))
    assert ref.marginals[("gender", "male")] == 0.47
    bad = dict(ok, marginals={"gender": {"male": 0.6, "female": 0.6}})
    with pytest.raises(DistributionInvalid, match="gender"):
        ingest.load_reference(write(tmp_path, "b.json", json.dumps(bad)))
    inconsistent = {
        "schema_version": 1, "election": "2020",
        "marginals": {"gender": {"male": 0.5, "female": 0.5}, "age": {"under30": 0.5, "30to39": 0.2, "40plus": 0.3}},
        "conditionals": {
            "gender=male": {"age": {"under30": 0.51, "30to39": 0.2, "40plus": 0.29}},
            "gender=female": {"age": {"under30": 0.5, "30to39": 0.2, "40plus": 0.3}},
        },
    }
    with pytest.raises(DistributionInvalid, match="inconsistent"):
        ingest.load_reference(write(tmp_path, "c.json", json.dumps(inconsistent)))
    with pytest.raises(VersionMismatch):
        ingest.load_reference(write(tmp_path, "v.json", json.dumps(dict(ok, schema_version=9))))


def test_model_round_trip(tmp_path, noisy_corpus, registry):
    _, rows = noisy_corpus
    model = fit(rows, registry, POSTSTRAT_DIMENSIONS, 50)
    path = tmp_path / "m.json"
    ingest.save_model(model, path)
    assert ingest.load_model(path) == model
    data = json.loads(path.read_text())
    data["schema_version"] = 2
    path.write_text(json.dumps(data))
    with pytest.raises(VersionMismatch):
        ingest.load_model(path)
    data["schema_version"] = 1
    data["coefficients"]["gender=female"] = 0.1
    path.write_text(json.dumps(data))
    with pytest.raises(ValidationError, match="reference stratum"):
        ingest.load_model(path)


def test_reingest_is_identical(tmp_path, noisy_corpus):
    corpus, _ = noisy_corpus
    polls_text = ingest.polls_csv(corpus.bundle.polls)
    attrs_text = ingest.attributes_csv(corpus.bundle.attributes)
    polls, r1 = ingest.load_polls(write(tmp_path, "p.csv", polls_text))
    attrs, r2 = ingest.load_attributes(write(tmp_path, "a.csv", attrs_text), [p.poll_id for p in polls])
    assert r1.ok and r2.ok
    assert polls == corpus.bundle.polls
    assert attrs == corpus.bundle.attributes
    assert ingest.polls_csv(polls) == polls_text
    ref_path = tmp_path / "ref.json"
    ingest.save_reference(corpus.bundle.reference, ref_path)
    assert ingest.load_reference(ref_path) == corpus.bundle.reference


def test_head_to_head(tmp_path):
    path = write(tmp_path, "h.csv", "id,election,trump,dem\nnyt,2020,44,50\n")
    (row,) = ingest.load_head_to_head(path)
    assert row["share_focal"] == pytest.approx(44 / 94)
