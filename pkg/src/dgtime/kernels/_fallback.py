"""Pure SciPy version of the CSR accumulation kernel."""


def csr_accumulate(S, Y, out):
    """``out += S @ Y`` for a CSR matrix ``S``."""
    out += S @ Y
