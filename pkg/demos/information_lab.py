"""Exact information quantities on a small latent model.

Builds one random two-language factored model, checks the identities that the
disentanglement objective relies on, then shows that the shift-KL bound with a
table conditioned only on x_i can sit above the quantity it is meant to bound.

    python demos/information_lab.py
"""
import numpy as np

from polytrans import infolab as il


def exact_rest_table(M: il.FactoredModel, i: int) -> np.ndarray:
    """q(zs | x_rest): the best table that sees every program except x_i."""
    joint = M.p_data[..., None] * M.q_shared
    num = joint.sum(axis=i)
    return num / num.sum(axis=-1, keepdims=True)


def main() -> None:
    M = il.random_factored_model(7, n_languages=2, max_alphabet=3)
    J = M.inference_joint()
    print(f"alphabets x={M.x_sizes} z={M.z_sizes} zs={M.zs_size}")
    print(f"H(X1)        = {il.entropy(J, 'X1'):.4f} nats")
    print(f"I(X1;ZS)     = {il.mutual_information(J, 'X1', 'ZS'):.4f}")
    print(f"I(X1;X2;ZS)  = {il.interaction_information(J, 'X1', 'X2', 'ZS'):.4f}")

    print("\nidentity residuals (should be ~1e-16)")
    print(f"  latent overlap   {il.verify_latent_overlap(M, 0):.1e}")
    chain = il.verify_chain_rule(M, 0)
    print(f"  chain rule       {chain.identity_residual:.1e}")
    common = il.verify_common_information(M, 0)
    print(f"  common info      {max(common.expansion, common.combined):.1e}")

    # search the standard suite for the model where the literal bound fails worst
    worst = None
    for m in il.suite_models(1, 50):
        for key, chk in il.verify_bounds(m).items():
            if key.startswith("shift_kl") and (worst is None or chk.gap < worst[2].gap):
                worst = (m, key, chk)
    m, key, chk = worst
    i = int(key[key.index("[") + 1:-1]) - 1
    print(f"\nworst literal {key}: exact {chk.exact:.4f} bound {chk.bound:.4f} gap {chk.gap:+.4f}")
    fixed = il.shift_kl_complement_bound(m, i, exact_rest_table(m, i))
    print(f"same term with q(zs | x_rest): exact {fixed.exact:.4f} bound {fixed.bound:.4f} gap {fixed.gap:+.1e}")

    print("\nsuite summary")
    for row in il.run_suite(1, 50):
        print(f"  {'ok  ' if row.passed else 'FAIL'} {row.check:<28} {row.worst:+.2e}")


if __name__ == "__main__":
    main()
