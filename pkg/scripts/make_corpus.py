"""Write the synthetic shapes corpus (train/test/ood splits of 32x32 PNGs)."""
import argparse

from robustrep.synth import write_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--n-train", type=int, default=300, help="images per class")
    ap.add_argument("--n-test", type=int, default=100)
    ap.add_argument("--n-ood", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    counts = write_corpus(args.out, args.n_train, args.n_test, args.n_ood, seed=args.seed)
    for split, n in counts.items():
        print(f"{split}: {n} images")


if __name__ == "__main__":
    main()
