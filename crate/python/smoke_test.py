"""Smoke test for the `forge` extension module.

Build and install first:  pip install --no-build-isolation ./crates/python
Then run:                 python python/smoke_test.py
"""

import json
import pathlib
import shutil
import tempfile

import forge

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> None:
    assert forge.clean_text("  Cozy \u2728 Wool\u200b  Socks ") == "Cozy Wool Socks"
    assert forge.tokenize("Cozy Wool-Socks!") == ["cozy", "wool-socks", "!"]
    assert forge.normalize_label("Sure! It is Home & Living.") == "home and living"
    assert forge.normalize_label("no idea") is None

    s = "a warm pair of wool socks for winter"
    assert abs(forge.bleu(s, s) - 100.0) < 1e-9
    assert abs(forge.rouge_l(s, s) - 100.0) < 1e-9
    assert abs(forge.perplexity([-1.0, -1.0]) - 2.718281828459045) < 1e-12
    p, r, f1 = forge.macro_prf(["Home & Living"], ["home and living"])
    assert (p, r, f1) == (100.0, 100.0, 100.0)

    assert forge.lora_param_count(4096, 8, 32) == 8_388_608
    assert forge.lora_param_count(5120, 8, 40) == 13_107_200
    assert forge.lora_param_count(6656, 8, 60) == 25_559_040

    assert len(forge.metric_names()) == 18
    with open(ROOT / "data/replay/published_rows.jsonl") as fh:
        for line in fh:
            row = json.loads(line)
            gm = forge.report_gm(row["values"])
            assert abs(gm - row["reported_gm"]) <= 0.05, (row["model"], gm)

    out = pathlib.Path(tempfile.mkdtemp())
    try:
        config = ROOT / "configs/demo.json"
        sets = [f"paths.out_dir={json.dumps(str(out))}", "pipeline.target_total=100"]
        for stage in ["formulate", "expand", "curate", "verify"]:
            assert forge.run(stage, config, "mock", sets) == "clean", stage
        pairs = forge.load_pairs(out / "dataset.jsonl")
        assert len(pairs) == 100
        counts = {t: sum(p.task == t for p in pairs) for t in forge.task_kinds()}
        assert set(counts.values()) == {20}, counts
        assert len(forge.dedup(pairs + pairs[:5])) == 100
        again = forge.InstructionPair.from_json(pairs[0].to_json())
        assert again.id == pairs[0].id
        try:
            forge.run("curate", config, "mock", sets[:1] + ["pipeline.target_total=100000"])
        except RuntimeError as e:
            assert "curate" in str(e)
        else:
            raise AssertionError("oversized target must fail")
    finally:
        shutil.rmtree(out)
    print("forge python smoke test: ok")


if __name__ == "__main__":
    main()
