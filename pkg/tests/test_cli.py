"""End-to-end CLI tests: real subprocesses, real exit codes, real files."""

from __future__ import annotations

import json
import os
import signal
import socket
import subprocess
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest

CLI = [sys.executable, "-m", "mechkb.cli"]


def run_cli(*args, env_extra=None, **kwargs):
    env = {k: v for k, v in os.environ.items() if k != "MECHKB_ENDPOINT"}
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [*CLI, *args], capture_output=True, text=True, env=env, timeout=120, **kwargs
    )


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, corpus_path):
    """Ingested relations file plus a built index, both via the real CLI."""
    root = tmp_path_factory.mktemp("cli")
    relations = root / "relations.jsonl"
    ingest = run_cli("ingest", "--input", str(corpus_path), "--out", str(relations))
    assert ingest.returncode == 0, ingest.stderr
    index_dir = root / "kb"
    build = run_cli("build-index", "--input", str(relations), "--index", str(index_dir))
    assert build.returncode == 0, build.stderr
    return {"root": root, "relations": relations, "index": index_dir,
            "ingest": ingest, "build": build}


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def test_ingest_report_and_output(workspace):
    report = json.loads(workspace["ingest"].stdout)
    assert report == {
        "records_read": 50,
        "records_rejected": 0,
        "relations_seen": 54,
        "relations_below_threshold": 7,
        "relations_deduplicated": 3,
        "relations_kept": 44,
    }
    lines = workspace["relations"].read_text(encoding="utf-8").splitlines()
    assert len(lines) == 44
    stderr = workspace["ingest"].stderr
    assert "self_relation" in stderr
    assert "coref_ambiguity" in stderr


def test_ingest_threshold_changes_kept_count(workspace, corpus_path, tmp_path):
    out = tmp_path / "low.jsonl"
    result = run_cli("ingest", "--input", str(corpus_path), "--out", str(out),
                     "--threshold", "0.0")
    assert result.returncode == 0
    report = json.loads(result.stdout)
    assert report["relations_below_threshold"] == 0
    assert report["relations_kept"] > 44


def test_ingest_skips_broken_lines_unless_strict(tmp_path, corpus_path):
    mixed = tmp_path / "mixed.jsonl"
    good = corpus_path.read_text(encoding="utf-8").splitlines()[0]
    mixed.write_text(good + "\n{broken\n", encoding="utf-8")
    out = tmp_path / "out.jsonl"

    relaxed = run_cli("ingest", "--input", str(mixed), "--out", str(out))
    assert relaxed.returncode == 0
    assert json.loads(relaxed.stdout)["records_rejected"] == 1
    assert "malformed_json" in relaxed.stderr

    strict = run_cli("ingest", "--input", str(mixed), "--out", str(out), "--strict")
    assert strict.returncode == 2
    assert "rejected under --strict" in strict.stderr


def test_ingest_usage_errors_exit_1(tmp_path, corpus_path):
    out = tmp_path / "out.jsonl"
    bad_threshold = run_cli("ingest", "--input", str(corpus_path),
                            "--out", str(out), "--threshold", "2.0")
    assert bad_threshold.returncode == 1
    missing = run_cli("ingest", "--input", str(tmp_path / "nope.jsonl"),
                      "--out", str(out))
    assert missing.returncode == 1
    no_args = run_cli("ingest")
    assert no_args.returncode == 1  # click usage error remapped


# ---------------------------------------------------------------------------
# build-index
# ---------------------------------------------------------------------------


def test_build_index_prints_manifest(workspace):
    manifest = json.loads(workspace["build"].stdout)
    assert manifest["counts"] == {"relations": 44, "vocabulary": 64}
    assert manifest["provider"] == "fallback"
    assert manifest["format_version"] == 1
    for name in ("manifest.json", "vocab.tsv", "vectors.f32",
                 "postings.bin", "relations.jsonl"):
        assert (workspace["index"] / name).is_file()


def test_build_index_refuses_overwrite_without_force(workspace):
    refuse = run_cli("build-index", "--input", str(workspace["relations"]),
                     "--index", str(workspace["index"]))
    assert refuse.returncode == 1
    assert "--force" in refuse.stderr
    force = run_cli("build-index", "--input", str(workspace["relations"]),
                    "--index", str(workspace["index"]), "--force")
    assert force.returncode == 0


def test_build_index_rejects_empty_and_tampered_input(tmp_path, workspace):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    result = run_cli("build-index", "--input", str(empty),
                     "--index", str(tmp_path / "kb1"))
    assert result.returncode == 1

    rows = workspace["relations"].read_text(encoding="utf-8").splitlines()
    row = json.loads(rows[0])
    row["arg1"]["normalized"] = "Tampered Surface"  # id no longer matches content
    tampered = tmp_path / "tampered.jsonl"
    tampered.write_text(json.dumps(row) + "\n", encoding="utf-8")
    result = run_cli("build-index", "--input", str(tampered),
                     "--index", str(tmp_path / "kb2"))
    assert result.returncode == 2
    assert "bad relation row" in result.stderr

    dup = tmp_path / "dup.jsonl"
    dup.write_text(rows[0] + "\n" + rows[0] + "\n", encoding="utf-8")
    result = run_cli("build-index", "--input", str(dup),
                     "--index", str(tmp_path / "kb3"))
    assert result.returncode == 2
    assert "duplicate relation_id" in result.stderr


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------


def test_search_json_output_is_deterministic(workspace):
    args = ("search", "--index", str(workspace["index"]),
            "--e1", "ivermectin", "--e2", "covid-19", "--k", "5")
    first = run_cli(*args)
    second = run_cli(*args)
    assert first.returncode == 0
    assert first.stdout == second.stdout
    body = json.loads(first.stdout)
    rows = body["results"]
    assert rows
    assert rows[0]["arg1"].lower() == "ivermectin"
    scores = [r["score"] for r in rows]
    assert scores == sorted(scores, reverse=True)


def test_search_tsv_output_shape(workspace):
    result = run_cli("search", "--index", str(workspace["index"]),
                     "--e1", "ivermectin", "--k", "4", "--format", "tsv")
    assert result.returncode == 0
    lines = result.stdout.splitlines()
    header = lines[0].split("\t")
    assert header[:4] == ["score", "relation_id", "arg1", "arg2"]
    assert len(lines) == 5
    for line in lines[1:]:
        assert len(line.split("\t")) == len(header)


def test_search_class_and_symmetric_flags(workspace):
    direct = run_cli("search", "--index", str(workspace["index"]),
                     "--e1", "warm climate", "--class", "indirect", "--k", "10")
    assert direct.returncode == 0
    rows = json.loads(direct.stdout)["results"]
    assert rows and all(r["class"] == "INDIRECT" for r in rows)

    sym = run_cli("search", "--index", str(workspace["index"]),
                  "--e1", "coronavirus transmission", "--e2", "warm climate",
                  "--symmetric", "--threshold", "0.0", "--k", "3")
    assert sym.returncode == 0
    top = json.loads(sym.stdout)["results"][0]
    assert top["arg1"] == "warm climate"


def test_search_usage_errors(workspace, tmp_path):
    unknown_class = run_cli("search", "--index", str(workspace["index"]),
                            "--e1", "x", "--class", "causal")
    assert unknown_class.returncode == 1

    empty_e1 = run_cli("search", "--index", str(workspace["index"]), "--e1", "...")
    assert empty_e1.returncode == 1
    assert "after normalization" in empty_e1.stderr

    provider_clash = run_cli("search", "--index", str(workspace["index"]),
                             "--e1", "x", "--provider", "remote")
    assert provider_clash.returncode == 1
    assert "does not match" in provider_clash.stderr

    missing_index = run_cli("search", "--index", str(tmp_path / "absent"),
                            "--e1", "x")
    assert missing_index.returncode == 1


# ---------------------------------------------------------------------------
# remote provider plumbing
# ---------------------------------------------------------------------------


class _EmbedHandler(BaseHTTPRequestHandler):
    dim = 256

    def do_POST(self):
        if not self.path.endswith("/embed"):
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        texts = json.loads(self.rfile.read(length))["texts"]
        vectors = []
        for text in texts:
            row = [0.0] * self.dim
            row[sum(text.encode("utf-8")) % self.dim] = 1.0
            vectors.append(row)
        payload = json.dumps({"vectors": vectors, "dim": self.dim}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # keep test output quiet
        pass


@pytest.fixture()
def embed_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _EmbedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join()


def test_build_index_remote_provider_round_trip(workspace, tmp_path, embed_server):
    index_dir = tmp_path / "kb-remote"
    build = run_cli("build-index", "--input", str(workspace["relations"]),
                    "--index", str(index_dir),
                    "--provider", "remote", "--endpoint", embed_server)
    assert build.returncode == 0, build.stderr
    manifest = json.loads(build.stdout)
    assert manifest["provider"] == "remote"
    assert manifest["endpoint"] == embed_server
    # search works against the remote index (endpoint read from the manifest)
    result = run_cli("search", "--index", str(index_dir), "--e1", "ivermectin")
    assert result.returncode == 0, result.stderr
    assert json.loads(result.stdout)["results"]


def test_env_endpoint_overrides_flag(workspace, tmp_path, embed_server):
    index_dir = tmp_path / "kb-env"
    result = run_cli(
        "build-index", "--input", str(workspace["relations"]),
        "--index", str(index_dir),
        "--provider", "remote", "--endpoint", "http://127.0.0.1:9",
        env_extra={"MECHKB_ENDPOINT": embed_server},
    )
    assert result.returncode == 0, result.stderr  # env beat the dead flag value


def test_unreachable_remote_exits_3(workspace, tmp_path):
    result = run_cli("build-index", "--input", str(workspace["relations"]),
                     "--index", str(tmp_path / "kb-dead"),
                     "--provider", "remote", "--endpoint", "http://127.0.0.1:9")
    assert result.returncode == 3
    assert "unreachable" in result.stderr


def test_remote_requires_endpoint(workspace, tmp_path):
    result = run_cli("build-index", "--input", str(workspace["relations"]),
                     "--index", str(tmp_path / "kb-x"), "--provider", "remote")
    assert result.returncode == 1
    assert "MECHKB_ENDPOINT" in result.stderr


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _labels_csv(path, rows):
    lines = ["query_id,rank,relation_id,label"]
    lines += [f"{q},{r},{rid},{label}" for q, r, rid, label in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_eval_ranking_report(tmp_path):
    labels = _labels_csv(tmp_path / "labels.csv", [
        ("q1", 1, "11", 1), ("q1", 2, "12", 0), ("q1", 3, "13", 1), ("q1", 4, "14", 1),
        ("q2", 1, "21", 0), ("q2", 2, "22", 1),
    ])
    out = tmp_path / "pr.csv"
    result = run_cli("eval", "ranking", "--input", str(labels), "--out", str(out))
    assert result.returncode == 0, result.stderr
    report = json.loads(result.stdout)
    assert report["mode"] == "ranking"
    assert report["queries"]["q1"]["precision_at_k"] == 0.75
    assert report["queries"]["q2"]["precision_at_k"] == 0.5
    assert report["macro_precision_at_k"] == 0.625
    pr_lines = out.read_text(encoding="utf-8").splitlines()
    assert pr_lines[0] == "query_id,recall,precision"
    assert len(pr_lines) == 1 + 4 + 2


def test_eval_ranking_with_explicit_k(tmp_path):
    labels = _labels_csv(tmp_path / "labels.csv", [
        ("q1", 1, "11", 1), ("q1", 2, "12", 0), ("q1", 3, "13", 1), ("q1", 4, "14", 1),
    ])
    result = run_cli("eval", "ranking", "--input", str(labels), "--k", "3")
    assert result.returncode == 0
    report = json.loads(result.stdout)
    assert abs(report["queries"]["q1"]["precision_at_k"] - 2 / 3) < 1e-12

    too_deep = run_cli("eval", "ranking", "--input", str(labels), "--k", "9")
    assert too_deep.returncode == 1
    assert "out of range" in too_deep.stderr


def test_eval_ranking_warns_on_no_positives(tmp_path):
    labels = _labels_csv(tmp_path / "labels.csv", [
        ("q1", 1, "11", 1), ("q1", 2, "12", 0),
        ("q3", 1, "31", 0), ("q3", 2, "32", 0),
    ])
    result = run_cli("eval", "ranking", "--input", str(labels))
    assert result.returncode == 0
    assert "no positive labels" in result.stderr
    report = json.loads(result.stdout)
    assert report["queries"]["q3"]["pr_points"] is None
    assert report["queries"]["q3"]["precision_at_k"] == 0.0


def test_eval_agreement_report(tmp_path):
    rows = [("q1", r, f"id{r}", 0) for r in range(1, 5)]
    ref = _labels_csv(tmp_path / "ref.csv",
                      [(q, r, rid, v) for (q, r, rid, _), v in zip(rows, [1, 1, 0, 0])])
    other = _labels_csv(tmp_path / "other.csv",
                        [(q, r, rid, v) for (q, r, rid, _), v in zip(rows, [1, 0, 0, 1])])
    result = run_cli("eval", "agreement", "--input", str(ref), "--input", str(other))
    assert result.returncode == 0, result.stderr
    report = json.loads(result.stdout)
    assert report["mode"] == "agreement"
    assert report["n"] == 4
    assert report["accuracy"] == 0.5
    assert abs(report["kappa"]) < 1e-12
    assert abs(report["mcc"]) < 1e-12


def test_eval_agreement_rejects_mismatched_rankings(tmp_path):
    ref = _labels_csv(tmp_path / "ref.csv", [("q1", 1, "a", 1), ("q1", 2, "b", 0)])
    other = _labels_csv(tmp_path / "other.csv", [("q1", 1, "a", 1), ("q1", 2, "ZZ", 0)])
    result = run_cli("eval", "agreement", "--input", str(ref), "--input", str(other))
    assert result.returncode == 2
    assert "different relations" in result.stderr

    disjoint = _labels_csv(tmp_path / "q2.csv", [("q2", 1, "a", 1)])
    result = run_cli("eval", "agreement", "--input", str(ref), "--input", str(disjoint))
    assert result.returncode == 2
    assert "different query_ids" in result.stderr


def test_eval_input_arity_and_missing_columns(tmp_path):
    ref = _labels_csv(tmp_path / "ref.csv", [("q1", 1, "a", 1)])
    result = run_cli("eval", "ranking", "--input", str(ref), "--input", str(ref))
    assert result.returncode == 1
    result = run_cli("eval", "agreement", "--input", str(ref))
    assert result.returncode == 1

    broken = tmp_path / "broken.csv"
    broken.write_text("query_id,rank,label\nq1,1,1\n", encoding="utf-8")
    result = run_cli("eval", "ranking", "--input", str(broken))
    assert result.returncode == 1
    assert "missing column: relation_id" in result.stderr


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


def test_serve_validates_bind_and_index(tmp_path, workspace):
    bad_bind = run_cli("serve", "--index", str(workspace["index"]),
                       "--bind", "nonsense")
    assert bad_bind.returncode == 1
    assert "host:port" in bad_bind.stderr
    bad_index = run_cli("serve", "--index", str(tmp_path / "absent"))
    assert bad_index.returncode == 1


def test_serve_answers_health_and_stops_on_sigint(workspace):
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    env = {k: v for k, v in os.environ.items() if k != "MECHKB_ENDPOINT"}
    proc = subprocess.Popen(
        [*CLI, "serve", "--index", str(workspace["index"]),
         "--bind", f"127.0.0.1:{port}"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env,
    )
    try:
        deadline = time.monotonic() + 30
        body = None
        while time.monotonic() < deadline:
            try:
                response = httpx.get(f"http://127.0.0.1:{port}/health", timeout=1.0)
                if response.status_code == 200:
                    body = response.json()
                    break
            except httpx.TransportError:
                pass
            if proc.poll() is not None:
                break
            time.sleep(0.2)
        assert body is not None, proc.stderr.read() if proc.poll() is not None else "no 200"
        assert body["index"]["counts"]["relations"] == 44

        rows = httpx.get(
            f"http://127.0.0.1:{port}/search",
            params={"e1": "ivermectin", "e2": "covid-19"},
            timeout=5.0,
        ).json()["results"]
        assert rows and rows[0]["arg1"].lower() == "ivermectin"

        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=20) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait(timeout=10)
    assert "ready: 44 relations" in proc.stderr.read()
