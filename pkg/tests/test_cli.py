import io
import json
import math

import pytest

from expderiv.cli import COMMANDS, run


def call(*argv, env_seed=None, monkeypatch=None):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def kv(text):
    d = {}
    for line in text.splitlines():
        k, _, v = line.partition("=")
        d[k] = v
    return d


def test_ord_example():
    code, out, _ = call("ord", "X + E(X)")
    assert code == 0
    assert "ord=w*1+2" in out.splitlines()


def test_khov_check_example():
    code, out, _ = call("khov-check", "--backend", "real", "--system", "E(x)-2", "--point", "x=0.6931472")
    rep = kv(out)
    assert code == 0 and rep["verdict"] == "true"
    assert float(rep["det"]) == pytest.approx(2, abs=1e-6)


def test_normalize_domain_error():
    code, out, err = call("normalize", "E(1)")
    assert code == 2 and "DomainError" in err and out == ""


def test_propagate_and_solve_jet_values():
    code, out, _ = call("propagate", "--system", "y^2-c", "--unknowns", "y", "--params", "c",
                        "--point", "y=2,c=4", "--jet", "c:1=1", "--levels", "1")
    assert code == 0 and float(kv(out)["y__1.value"]) == pytest.approx(0.25)
    code, out, _ = call("solve-jet", "--system", "x2-E(x1)", "--point", "x1=0,x2=1",
                        "--free", "x1=3", "--dependent", "x2")
    assert code == 0 and float(kv(out)["b[x2]"]) == pytest.approx(3.0)


def test_hensel_and_padic_eval():
    code, out, _ = call("hensel", "--system", "x^2-17", "--point", "x=1", "--p", "2", "--precision", "10")
    rep = kv(out)
    assert code == 0 and rep["residual[0]"] == "0"
    x = int(rep["x"].split("*")[1].split()[0])
    assert (x * x - 17) % 2 ** 10 == 0 and x % 4 == 1
    code, out, _ = call("eval", "E(X)", "--point", "X=5", "--p", "5", "--precision", "6")
    assert code == 0 and kv(out)["value"].endswith("mod 5^6")


def test_dle_pipeline(tmp_path):
    inst, tgt, jet = tmp_path / "g.inst", tmp_path / "g.tgt", tmp_path / "g.jet"
    assert call("dle-build", "--demo", "gaussian", "--out", str(inst))[0] == 0
    tgt.write_text("backend=real\nx:0=0.5\nx:1=1.0\ny:0=%r\ny:1=%r\n" % (math.exp(0.25), math.exp(0.25)))
    code, out, _ = call("dle-solve", "--in", str(inst), "--target", str(tgt), "--seed", "5", "--out", str(jet))
    rep = kv(out)
    assert code == 0 and rep["success"] == "true" and rep["seed"] == "5"
    assert jet.read_text().startswith("backend=real\n")
    code, out, _ = call("dle-render", "--in", str(inst))
    assert code == 0 and "PHI*_H:" in json.loads(kv(out)["render"])


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("EXPDERIV_SEED", "9")
    assert kv(call("dle-solve", "--demo", "linear")[1])["seed"] == "9"
    assert kv(call("dle-solve", "--demo", "linear", "--seed", "2")[1])["seed"] == "2"
    monkeypatch.delenv("EXPDERIV_SEED")
    assert kv(call("dle-solve", "--demo", "linear")[1])["seed"] == "0"


EXIT_MATRIX = [
    (0, ["normalize", "D(x*E(y))"]),
    (0, ["diff", "X*E(X^2)", "--var", "X"]),
    (0, ["delta-shift", "x*c + E(c)"]),
    (0, ["jacobian", "--system", "E(x)-y; y-1", "--vars", "x,y"]),
    (0, ["khov-build", "--system", "y^2-c", "--unknowns", "y", "--params", "c"]),
    (0, ["newton", "--system", "y^2-c", "--unknowns", "y", "--params", "c", "--point", "y=1.4,c=2"]),
    (0, ["star", "D(x)*x - 1 = 0"]),
    (0, ["eval", "E(X)-2", "--point", "X=0.6931472"]),
    (0, ["torsor", "--system", "x^2-2", "--point", "x=1.4142136", "--tangent", "x=0"]),
    (0, ["dle-solve", "--demo", "harmonic"]),
    (1, ["khov-check", "--system", "x^2", "--point", "x=0"]),
    (1, ["torsor", "--system", "x^2-2", "--point", "x=1.4142136", "--tangent", "x=1"]),
    (1, ["newton", "--system", "y^2", "--point", "y=0"]),
    (1, ["newton", "--system", "y^2+1", "--point", "y=0.5"]),
    (1, ["hensel", "--system", "x^2-3", "--point", "x=1", "--p", "5"]),
    (2, ["normalize", "E(1)"]),
    (2, ["eval", "x +"]),
    (2, ["bogus"]),
    (2, []),
    (2, ["hensel", "--system", "x^2-2", "--point", "x=3", "--p", "6"]),
    (2, ["hensel", "--system", "x^2-2", "--point", "x=3"]),
    (2, ["eval", "x", "--point", "x=1", "--eps-res", "-1"]),
    (2, ["eval", "x + y", "--point", "x=1"]),
    (2, ["dle-solve", "--demo", "nonexistent"]),
    (2, ["dle-render", "--in", "/nonexistent/file"]),
    (2, ["normalize", "D(inv(x))"]),
]


@pytest.mark.parametrize("code, argv", EXIT_MATRIX, ids=lambda v: " ".join(v) if isinstance(v, list) else str(v))
def test_exit_codes(code, argv):
    assert call(*argv)[0] == code


@pytest.mark.parametrize("code, argv", [m for m in EXIT_MATRIX if m[0] != 2],
                         ids=lambda v: " ".join(v) if isinstance(v, list) else str(v))
def test_json_matches_line_format(code, argv):
    c1, lines, _ = call(*argv)
    c2, js, _ = call(*argv, "--json")
    assert c1 == c2 == code
    assert json.loads(js) == kv(lines)


def test_every_subcommand_is_exercised():
    used = {argv[0] for _, argv in EXIT_MATRIX if argv}
    used |= {"ord", "khov-check", "propagate", "solve-jet", "hensel", "dle-build", "dle-render"}
    assert used >= set(COMMANDS)


def test_version_and_help():
    assert call("--version")[0] == 0
    assert call("ord", "--help")[0] == 0
