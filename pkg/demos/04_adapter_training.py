# Goal: train the linear adapter on the synthetic corpus and watch the
# in-batch ranking loss fall while held-out retrieval improves. Also records
# per-epoch test MRR@10, which is how to inspect overfitting if you train
# for more epochs than the default two.

from riskrank import (
    EvalConfig,
    HashEmbedder,
    TrainingConfig,
    run_eval,
    split_pairs,
    synth_dataset,
    train_adapter,
)

_, pairs = synth_dataset(n_clusters=5, pairs_per_cluster=100,
                         vocab_per_cluster=50, seed=7)
split = split_pairs(pairs, ratio=0.95, seed=7)
embedder = HashEmbedder(dim=256, seed=0)
eval_config = EvalConfig(retrieval_mode="dense", candidate_pool="all_contexts",
                         k_list=(5, 10, 100), seed=7)

base = run_eval(pairs, split, embedder, eval_config)
print(f"base model (identity adapter): MRR@10 = {base.aggregate['MRR@10']:.4f}")

per_epoch_mrr = []


def record_test_mrr(epoch, snapshot):
    report = run_eval(pairs, split, embedder, eval_config, adapter=snapshot)
    per_epoch_mrr.append((epoch, report.aggregate["MRR@10"]))


training = TrainingConfig(batch_size=12, epochs=2, learning_rate=0.05,
                          scale=4.0, seed=7)
adapter, losses = train_adapter(split.train, embedder, training,
                                epoch_callback=record_test_mrr)

print("\nepoch | mean loss | in-batch acc | test MRR@10")
for i, (loss, acc) in enumerate(zip(losses.epoch_mean_loss, losses.epoch_accuracy)):
    epoch, mrr = per_epoch_mrr[i]
    print(f"  {epoch}   |  {loss:.4f}   |    {acc:.3f}     |   {mrr:.4f}")

final = run_eval(pairs, split, embedder, eval_config, adapter=adapter)
margin = final.aggregate["MRR@10"] - base.aggregate["MRR@10"]
print(f"\ntrained adapter: MRR@10 = {final.aggregate['MRR@10']:.4f} "
      f"({margin:+.4f} vs base)")
for name in ("MAP@100", "NDCG@10", "HR@5"):
    print(f"  {name}: {base.aggregate[name]:.4f} -> {final.aggregate[name]:.4f}")
