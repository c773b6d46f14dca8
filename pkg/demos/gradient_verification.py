"""Trust-but-verify for the reverse-mode engine.

Every analytic gradient in the package can be checked against central
differences. This script runs the same three suites as `linpaint gradcheck`:
each primitive operation, one full transformer block, and the whole
encoder-decoder model.

Run: python demos/gradient_verification.py
"""

from linpaint.cli import run_gradcheck


def main() -> None:
    ok, lines = run_gradcheck("all", seed=0)
    for line in lines:
        print(line)
    print()
    print("all suites passed" if ok else "FAILURES above")


if __name__ == "__main__":
    main()
