"""TOML fixtures shared by the config, CLI and acceptance tests."""


def _spec_block(name, body):
    return f"[nonlinearity.{name}]\n{body}\n"


def quad_block(body):
    return "".join(_spec_block(n, body) for n in ("f", "g", "h", "gamma"))


SQRT_MINUS_ONE = 'kind = "polynomial-sum"\nterms = [[1.0, 0.5]]\noffset = 1.0'
PIECEWISE = 'kind = "piecewise-power"\ninner = 2.0\nouter = 0.5'


def config_text(n=64, p=2, q=2, body=SQRT_MINUS_ONE, extra=""):
    return (f"seed = 0\n\n[domain]\nkind = \"interval\"\nresolution = {n}\n\n"
            f"[exponents]\np = {p}\nq = {q}\n\n[parameters]\nmode = \"auto\"\n\n"
            f"{extra}\n" + quad_block(body))


MINIMAL = config_text()
EX31_128 = config_text(n=128)
EX32_128 = config_text(n=128, body=PIECEWISE)
H3_COUNTER = config_text(body='kind = "polynomial-sum"\nterms = [[1.0, 1.0]]')
