"""Smoke test for the citewin Python module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/citewin-*.whl
"""

import math
import tempfile

import citewin


def check(name, ok):
    print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return ok


def main():
    results = []

    results.append(check("median of cited", citewin.median_of_cited([0, 3, 1, 4]) == 3.0))
    results.append(check("median of uncited", citewin.median_of_cited([0, 0]) is None))

    pct = citewin.percentile_rank({"a": 3.0, "b": 2.0, "c": 2.0, "d": 0.0})
    results.append(check("percentile ranks", pct == {"a": 100, "b": 50, "c": 50, "d": 0}))
    results.append(check("quartile class", [citewin.quartile_class(p) for p in (100, 74, 50, 24)] == [4, 3, 3, 1]))

    rho = citewin.spearman([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    results.append(check("spearman identity", rho == 1.0))

    results.append(check("normal quantile", abs(citewin.norm_ppf(citewin.norm_cdf(1.3)) - 1.3) < 1e-10))

    y = [True] * 90 + [False] * 10 + [True] * 10 + [False] * 90
    x = [True] * 100 + [False] * 100
    fit = citewin.fit_probit(y, x)
    expected = citewin.norm_ppf(0.9) - citewin.norm_ppf(0.1)
    results.append(check("probit closed form", math.isclose(fit.beta1, expected, abs_tol=1e-8)))

    corpus, truth = citewin.simulate()
    results.append(check("simulate", corpus.n_researchers == len(truth) and corpus.n_publications > 0))

    analysis = corpus.analyze()
    codes = analysis.sds_codes()
    series = analysis.spearman_series(codes[0])
    early_years = corpus.observation_years[:-1]
    results.append(check("spearman per early year", [yr for yr, _ in series] == early_years))
    results.append(check("spearman in range", all(rho is not None and -1.0 <= rho <= 1.0 for _, rho in series)))
    results.append(check("probit per UDA", len(analysis.probit()) >= 1))

    with tempfile.TemporaryDirectory() as tmp:
        corpus.write_dir(tmp)
        reloaded = citewin.Corpus.load(f"{tmp}/researchers.csv", f"{tmp}/publications.csv", f"{tmp}/citations.csv")
        again = reloaded.analyze()
        same = all(
            again.percentiles(c, corpus.benchmark_year) == analysis.percentiles(c, corpus.benchmark_year)
            for c in codes
        )
        results.append(check("csv round trip", same))

    try:
        citewin.quartile_class(101)
        results.append(check("out-of-range percentile rejected", False))
    except ValueError:
        results.append(check("out-of-range percentile rejected", True))

    failed = results.count(False)
    print(f"{len(results) - failed}/{len(results)} passed")
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
