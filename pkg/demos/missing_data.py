"""Semi-parallel training against training on the fully parallel subset only.

Two of three languages are each missing from 40% of samples.  Both runs use the
same corpus, seed and number of epochs.  Takes a few minutes per seed.

    python demos/missing_data.py [seed]
"""
import sys

from polytrans import corpus as C
from polytrans import evaluate as E
from polytrans import train as T


def main(seed: int) -> None:
    cfg = C.CorpusConfig(languages=("toyA", "toyB", "toyC"), missing_rates=(0.0, 0.4, 0.4), seed=seed)
    splits = C.generate_splits(cfg, 1000, 100)
    st = C.stats(splits["train"])
    print(st.counts_csv(), end="")
    print(st.pairs_csv(), end="")

    for strategy in ("parallel_only", "semi"):
        res = T.train(splits["train"], T.TrainConfig(seed=seed, strategy=strategy, lr=2e-3, epochs=4,
                                                     batch_size=32, micro_batch=32))
        m = E.evaluate_matrix(splits["test"], res.params)
        per_dir = ", ".join(f"{s}->{t} {v:.1f}" for (s, t), v in sorted(m.bleu.items()))
        print(f"{strategy:<14} mean BLEU {m.mean_bleu():6.2f}  ({res.seconds:.0f}s)  {per_dir}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
