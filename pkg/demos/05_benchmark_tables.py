# Goal: evaluate several systems on the same split and emit the two report
# shapes: the base-vs-finetuned metric table and the system comparison table
# (hit rate, improvement in percentage points, embedding size).

from pathlib import Path
from tempfile import TemporaryDirectory

from riskrank import (
    EvalConfig,
    HashEmbedder,
    MetricComparison,
    TrainingConfig,
    compare_systems,
    emit_report,
    run_eval,
    split_pairs,
    synth_dataset,
    train_adapter,
)

_, pairs = synth_dataset(5, 100, 50, seed=7)
split = split_pairs(pairs, ratio=0.95, seed=7)
config = EvalConfig(retrieval_mode="dense", candidate_pool="all_contexts",
                    k_list=(5, 10, 100), seed=7)

systems = {
    "hash-128": HashEmbedder(dim=128, seed=0),
    "hash-256": HashEmbedder(dim=256, seed=0),
    "hash-512": HashEmbedder(dim=512, seed=0),
}
reports = {name: run_eval(pairs, split, emb, config) for name, emb in systems.items()}

training = TrainingConfig(batch_size=12, epochs=2, learning_rate=0.05,
                          scale=4.0, seed=7)
adapter, _ = train_adapter(split.train, systems["hash-256"], training)
reports["adapted-256"] = run_eval(pairs, split, systems["hash-256"], config,
                                  adapter=adapter)

with TemporaryDirectory() as tmp:
    comparison = MetricComparison(base=reports["hash-256"],
                                  finetuned=reports["adapted-256"])
    md = emit_report(comparison, "markdown", Path(tmp) / "base_vs_finetuned.md")
    print("base vs finetuned (markdown):\n")
    print(md.read_text())

    dims = {"hash-128": 128, "hash-256": 256, "hash-512": 512, "adapted-256": 256}
    table = compare_systems(reports, reference="adapted-256", dims=dims)
    md = emit_report(table, "markdown", Path(tmp) / "system_comparison.md")
    print("system comparison (markdown):\n")
    print(md.read_text())
    emit_report(table, "json", Path(tmp) / "table.json", config=config)
    emit_report(table, "csv", Path(tmp) / "plotdata.csv")
    print(f"json + csv artifacts also written (fingerprint {config.fingerprint()})")
