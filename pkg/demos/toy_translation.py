"""Train a small model on the three toy languages and translate a few programs.

Takes about a minute on one core.

    python demos/toy_translation.py
"""
from polytrans import corpus as C
from polytrans import evaluate as E
from polytrans import model as M
from polytrans import train as T


def main() -> None:
    cfg = C.CorpusConfig(languages=("toyA", "toyB", "toyC"), k=2, max_tokens=16, seed=3)
    splits = C.generate_splits(cfg, 400, 30)
    dims = M.ModelDims(vocab_size=len(splits["train"].vocab), d_model=32, n_heads=2, enc_layers=1,
                       dec_layers=1, d_ff=64, dec_d_ff=64, latent=8, k=2, proj_hidden=32, max_len=24)
    res = T.train(splits["train"], T.TrainConfig(epochs=10, lr=3e-3, batch_size=16, micro_batch=16),
                  dims=dims, log=print)

    test = splits["test"].samples[:4]
    for src, tgt in (("toyA", "toyB"), ("toyC", "toyA")):
        print(f"\n{src} -> {tgt}")
        hyps = E.translate_batch(res.params, [s.tokens[src] for s in test], src, tgt)
        for s, h in zip(test, hyps):
            print("  src ", " ".join(s.tokens[src]))
            print("  ref ", " ".join(s.tokens[tgt]))
            print("  hyp ", " ".join(h))

    m = E.evaluate_matrix(splits["test"], res.params)
    print("\nBLEU (rows source, columns target)")
    print(m.bleu_csv(), end="")
    print("naive copy")
    print(m.naive_csv(), end="")


if __name__ == "__main__":
    main()
