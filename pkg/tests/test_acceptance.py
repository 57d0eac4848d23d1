"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (or as a script); the summary
appears under "acceptance criteria" at the end of the pytest report.
"""

import csv
import hashlib
import random
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from harness import DATA, RECORD_BODY, criterion, flip_bit, relayed_handshake, session_pair
from skylink import channel, ids, telemetry, trafficlab
from skylink.channel import FrameType, Frame, frame_nonce, open_frame, seal_frame
from skylink.cli import main as cli_main
from skylink.eax import eax_decrypt, eax_encrypt, read_vectors
from skylink.errors import (
    EmptyDataset,
    HandshakeTampered,
    InvalidCiphertext,
    ReplayDetected,
    SingleClassEval,
    SingleClassTraining,
)
from skylink.kem import KemScheme, kem_decapsulate, kem_encapsulate, kem_keygen, mlkem
from skylink.kem.kat import load_acvp
from skylink.station import GroundStation, StationConfig, run_uav_client

SCHEMES = [KemScheme.ECDH_KEM, KemScheme.ML_KEM_512]


# 1 ---------------------------------------------------------------------------------------

def test_c01_eax_published_vectors():
    with criterion(1, "EAX-AES128 published vectors", budget_s=1.0) as c:
        vectors = read_vectors(DATA / "eax_aes128_vectors.txt")
        assert len(vectors) == 10
        for key, nonce, header, msg, cipher in vectors:
            assert eax_encrypt(key, nonce, header, msg) == cipher
            assert eax_decrypt(key, nonce, header, cipher) == msg
        c.notes.append(f"{len(vectors)}/10 bit-exact")


# 2 ---------------------------------------------------------------------------------------

def test_c02_eax_properties():
    with criterion(2, "EAX round trips, bit-flip rejection, length law", budget_s=30.0) as c:
        rng = random.Random(2024)
        for _ in range(10_000):
            key, nonce = rng.randbytes(16), rng.randbytes(rng.randrange(1, 33))
            header, msg = rng.randbytes(rng.randrange(0, 48)), rng.randbytes(rng.randrange(0, 200))
            ct = eax_encrypt(key, nonce, header, msg)
            assert len(ct) == len(msg) + 16
            assert eax_decrypt(key, nonce, header, ct) == msg

        flips = 0
        for _ in range(10):
            key, nonce, header, msg = rng.randbytes(16), rng.randbytes(16), rng.randbytes(16), rng.randbytes(64)
            ct = eax_encrypt(key, nonce, header, msg)
            parts = {"ct": ct, "nonce": nonce, "header": header}
            for name, value in parts.items():
                for i in range(len(value) * 8):
                    args = dict(parts, **{name: flip_bit(value, i // 8, i % 8)})
                    with pytest.raises(InvalidCiphertext):
                        eax_decrypt(key, args["nonce"], args["header"], args["ct"])
                    flips += 1
        c.notes.append(f"10000 round trips; {flips}/{flips} single-bit corruptions rejected")


# 3 ---------------------------------------------------------------------------------------

def test_c03_mlkem_conformance_and_roundtrips():
    with criterion(3, "ML-KEM-512 known answers and 10k round trips", budget_s=60.0) as c:
        suite = load_acvp(DATA / "mlkem512_acvp.json")
        for k in suite.keygen:
            assert mlkem.keygen_internal(k.d, k.z) == (k.ek, k.dk)
        for e in suite.encaps:
            assert mlkem.encaps_internal(e.ek, e.m) == (e.c, e.k)
        for d in suite.decaps:
            assert mlkem.decaps(d.dk, d.c) == d.k
        n_kat = len(suite.keygen) + len(suite.encaps) + len(suite.decaps)

        rng = random.Random(3)
        secrets = set()
        kp = None
        for i in range(10_000):
            if i % 100 == 0:
                kp = kem_keygen(KemScheme.ML_KEM_512, rng)
            ct, secret = kem_encapsulate(KemScheme.ML_KEM_512, kp.public_key, rng)
            assert len(secret) == 32
            assert kem_decapsulate(KemScheme.ML_KEM_512, kp.secret_key, ct) == secret
            secrets.add(secret)
        assert len(secrets) == 10_000
        c.notes.append(f"{n_kat} KAT cases; 10000 round trips agree, all secrets distinct")


# 4 ---------------------------------------------------------------------------------------

def _schoolbook(a, b, q):
    out = np.zeros(512, dtype=np.int64)
    for i in range(256):
        out[i : i + 256] += int(a[i]) * b
    return (out[:256] - out[256:]) % q


def test_c04_ntt_against_schoolbook():
    with criterion(4, "NTT product equals schoolbook negacyclic product", budget_s=10.0) as c:
        rng = np.random.default_rng(4)
        q = mlkem.Q
        for _ in range(100):
            a, b = rng.integers(0, q, 256), rng.integers(0, q, 256)
            fast = mlkem.ntt_inverse(mlkem.ntt_multiply(mlkem.ntt_forward(a), mlkem.ntt_forward(b)))
            assert np.array_equal(np.asarray(fast) % q, _schoolbook(a, b, q))
        c.notes.append("100/100 pairs exact mod 3329")


# 5 ---------------------------------------------------------------------------------------

def _handshake_faults(rng):
    """Yield (label, scheme, mutate) for 700 handshake faults."""
    for scheme in SCHEMES:
        for _ in range(150):
            # SERVER_HELLO: header magic/version/type bytes and every body byte past the scheme id
            def mutate(d, i, t, raw, r=rng.random()):
                if (d, i) != ("s2c", 0):
                    return raw
                offs = [o for o in range(len(raw)) if o < 6 or o > RECORD_BODY]
                o = offs[int(r * len(offs))]
                return flip_bit(raw, o, int(r * 1e6) % 8)
            yield "server_hello", scheme, mutate
    for _ in range(100):
        def mutate(d, i, t, raw, r=rng.random()):
            if (d, i) != ("c2s", 0):
                return raw
            o = len(raw) - 16 + int(r * 16)  # client random
            return flip_bit(raw, o, int(r * 1e6) % 8)
        yield "client_hello", rng.choice(SCHEMES), mutate
    targets = [("c2s", 1), ("c2s", 2), ("s2c", 1)]
    for k in range(200):
        def mutate(d, i, t, raw, r=rng.random(), target=targets[k % 3]):
            if (d, i) != target:
                return raw
            o = RECORD_BODY + int(r * (len(raw) - RECORD_BODY))
            return flip_bit(raw, o, int(r * 1e6) % 8)
        yield "kem_ct/finished", rng.choice(SCHEMES), mutate


def test_c05_handshake_and_channel():
    with criterion(5, "handshake tamper/replay harness and nonce uniqueness", budget_s=60.0) as c:
        for scheme in SCHEMES:
            cli, srv, _ = relayed_handshake(scheme, seed=int(scheme))
            assert cli.error is None and srv.error is None
            assert cli.value.key_c2s == srv.value.key_c2s

        rng = random.Random(5)
        detected = total = 0
        for n, (label, scheme, mutate) in enumerate(_handshake_faults(rng)):
            cli, srv, _ = relayed_handshake(scheme, mutate, seed=1000 + n)
            total += 1
            ok = isinstance(cli.error, HandshakeTampered)
            assert ok, (label, cli.error, srv.error)
            detected += ok

        # replayed KEM ciphertexts from earlier sessions
        for n in range(100):
            scheme = SCHEMES[n % 2]
            _, _, old = relayed_handshake(scheme, seed=5000 + n)
            stale = old.seen["c2s"][1]
            cli, srv, _ = relayed_handshake(
                scheme, lambda d, i, t, raw: stale if (d, i) == ("c2s", 1) else raw, seed=6000 + n)
            total += 1
            assert isinstance(cli.error, HandshakeTampered) and isinstance(srv.error, HandshakeTampered)
            detected += 1

        # data-phase replays and reorders
        cs, ss = session_pair(KemScheme.ECDH_KEM, seed=55)
        frames = [seal_frame(cs, FrameType.DATA, b"", bytes([i % 256])) for i in range(600)]
        accepted = []
        for k in range(300):
            f = frames[2 * k]
            open_frame(ss, f)
            accepted.append(f)
            stale = rng.choice(accepted) if k % 2 else frames[2 * k - 1] if k else accepted[0]
            total += 1
            with pytest.raises(ReplayDetected):
                open_frame(ss, stale)
            detected += 1
        assert total == detected == 1000
        c.notes.append(f"{detected}/{total} faults detected")

        # 10,000-frame session: no (key, nonce) pair repeats
        cs, ss = session_pair(KemScheme.ML_KEM_512, seed=56)
        used = set()
        bodies = set()
        for i in range(10_000):
            f = seal_frame(cs, FrameType.DATA, b"h", b"same payload")
            assert open_frame(ss, f) == b"same payload"
            used.add((cs.key_c2s, frame_nonce(1, f.counter)))
            bodies.add(f.body)
            if i % 100 == 99:
                g = seal_frame(ss, FrameType.ACK, b"", b"ack")
                assert open_frame(cs, g) == b"ack"
                used.add((ss.key_s2c, frame_nonce(2, g.counter)))
                bodies.add(g.body)
        assert len(used) == len(bodies) == 10_100
        c.notes.append("10100 frames, 0 (key, nonce) reuse")


# 6 ---------------------------------------------------------------------------------------

def test_c06_concurrent_ten_mib_transfers(tmp_path):
    with criterion(6, "3 concurrent clients x 10 MiB over both schemes", budget_s=60.0) as c:
        files = []
        for i in range(3):
            p = tmp_path / f"payload{i}.bin"
            p.write_bytes(random.Random(60 + i).randbytes(10 * 1024 * 1024))
            files.append(p)
        digests = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in files}
        matched = 0
        cfg = StationConfig(storage_dir=tmp_path / "store", max_sessions=8, timeout_s=30)
        with GroundStation(cfg) as gs:
            for scheme in SCHEMES:
                with ThreadPoolExecutor(3) as pool:
                    reports = list(pool.map(lambda f: run_uav_client(gs.address, [f], scheme, timeout=30), files))
                for f, rep in zip(files, reports):
                    stored = cfg.storage_dir / rep.session_id / f.name
                    assert hashlib.sha256(stored.read_bytes()).hexdigest() == digests[f.name]
                    matched += 1
        assert matched == 6
        c.notes.append("6/6 stored digests equal source")


# 7 ---------------------------------------------------------------------------------------

def test_c07_bench_metrics_schema(tmp_path, capsys):
    with criterion(7, "bench --runs 3 schema and 7x2 comparison grid") as c:
        records = []
        for scheme in ("ecdh", "ml-kem-512"):
            out = tmp_path / f"{scheme}.csv"
            assert cli_main(["bench", "--runs", "3", "--scheme", scheme, "--seed", "7", "--out", str(out)]) == 0
            with out.open(newline="") as fh:
                reader = csv.reader(fh)
                assert next(reader) == list(telemetry.CSV_FIELDS)
            got = telemetry.read_metrics_csv(out)
            assert len(got) == 3 and {r.scheme for r in got} == {scheme}
            records += got
        capsys.readouterr()
        for r in records:
            for field in ("handshake_time_ms", "encryption_time_s", "decryption_time_s",
                          "connection_duration_s", "server_response_time_s"):
                assert getattr(r, field) > 0, (r.run_id, field)
        rows = telemetry.comparison_rows(records)
        assert len({r["parameter"] for r in rows}) == 7 and len(rows) == 7
        assert all(r["ECC"] is not None and r["CRYSTALS-Kyber"] is not None for r in rows)
        table = telemetry.comparison_table(records)
        assert "ECC" in table and "CRYSTALS-Kyber" in table
        hs = {r["ECC"]: r["CRYSTALS-Kyber"] for r in rows if r["parameter"].startswith("Handshake")}
        c.notes.append("header exact; 7 parameters x 2 schemes; handshake ms ECC/Kyber "
                       + ", ".join(f"{a:.2f}/{b:.2f}" for a, b in hs.items()))


# 8 ---------------------------------------------------------------------------------------

def test_c08_dataset_presets(tmp_path):
    with criterion(8, "dataset preset sizes, ratios and byte-identical regeneration", budget_s=60.0) as c:
        expected = {1: (27_000, 0.60, 0.70), 2: (27_000, 0.60, 0.93), 3: (200_000, 0.70, 0.70),
                    4: (200_000, 0.70, 0.93)}
        for eid, (n_train, r_train, r_test) in expected.items():
            cfg = trafficlab.preset(eid, seed=8)
            assert (cfg.train_size, cfg.train_ratio, cfg.test_ratio) == (n_train, r_train, r_test)
            a = trafficlab.write_experiment(cfg, tmp_path / f"e{eid}a")
            b = trafficlab.write_experiment(cfg, tmp_path / f"e{eid}b")
            for x, y in zip(a, b):
                assert x.read_bytes() == y.read_bytes()
            train, test = trafficlab.read_csv(a[0]), trafficlab.read_csv(a[1])
            assert len(train) == n_train
            assert abs((train.label == 0).mean() - r_train) <= 0.005
            assert abs((test.label == 0).mean() - r_test) <= 0.005
        c.notes.append("4/4 presets within 0.5 pp; regeneration byte-identical")


# 9 ---------------------------------------------------------------------------------------

def _pairwise_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    return ((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (len(pos) * len(neg))


def test_c09_auc_oracle():
    with criterion(9, "roc_auc matches the pairwise oracle", budget_s=10.0) as c:
        rng = np.random.default_rng(9)
        worst = 0.0
        for k in range(200):
            n = int(rng.integers(2, 51))
            labels = rng.integers(0, 2, n)
            labels[rng.choice(n, 2, replace=False)] = [0, 1]
            scores = rng.integers(0, 8, n) / 7.0 if k % 2 else rng.random(n)
            worst = max(worst, abs(ids.roc_auc(scores, labels) - _pairwise_auc(scores, labels)))
        assert worst <= 1e-9
        c.notes.append(f"200 datasets, max |diff| {worst:.1e}")


# 10 --------------------------------------------------------------------------------------

def test_c10_ids_calibrated_analogues():
    with criterion(10, "IDS analogues over 5 seeds", budget_s=600.0) as c:
        seeds = range(5)
        e1 = [ids.run_experiment(1, ["lr"], seed=s).reports["lr"] for s in seeds]
        lr_acc = np.mean([r.accuracy for r in e1])
        lr_auc = np.mean([r.auc for r in e1])
        e4 = [ids.run_experiment(4, ["lr", "nb", "gbdt"], seed=s).reports for s in seeds]
        means = {k: (np.mean([r[k].accuracy for r in e4]), np.mean([r[k].auc for r in e4]))
                 for k in ("lr", "nb", "gbdt")}
        c.notes.append(f"exp1 LR acc {lr_acc:.4f} auc {lr_auc:.4f}")
        c.notes.append("exp4 " + ", ".join(f"{k} acc {a:.4f} auc {u:.4f}" for k, (a, u) in means.items()))
        assert lr_acc >= 0.85 and lr_auc >= 0.90
        assert means["gbdt"][0] >= 0.95 and means["gbdt"][1] >= 0.90
        for kind, (acc, auc) in means.items():
            assert acc > 0.93 and auc >= 0.75, kind


# 11 --------------------------------------------------------------------------------------

def test_c11_degenerate_inputs():
    with criterion(11, "degenerate datasets raise typed errors") as c:
        train, test = trafficlab.generate(trafficlab.ExperimentConfig(0, 1000, 0.6, 1000, 0.7, False, seed=11))
        clients = train[train.label == 0]
        with pytest.raises(SingleClassTraining):
            ids.prepare(clients)
        fm = ids.prepare(train)
        with pytest.raises(SingleClassTraining):
            ids.train("gbdt", ids.FeatureMatrix(fm.X[:50], np.zeros(50, int), fm.scaler))
        model = ids.train("lr", fm)
        one_class = ids.prepare(test[test.label == 1], fm.scaler)
        with pytest.raises(SingleClassEval):
            ids.evaluate(model, one_class)
        with pytest.raises(SingleClassEval):
            ids.roc_auc([0.2, 0.4], [0, 0])
        with pytest.raises(EmptyDataset):
            ids.prepare(train.iloc[:0])
        with pytest.raises(EmptyDataset):
            ids.prepare(test.iloc[:0], fm.scaler)
        c.notes.append("SingleClassTraining, SingleClassEval, EmptyDataset all raised")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", *sys.argv[1:]]))
