"""Derive the body forces of the shear-flow manufactured solution.

Fields depend on x1 only: u = (0, U(x1, t)), phi(x1, t), rho(x1). Convection
and the capillary force (a pure x1 gradient) drop out after projection, so

    rho U_t   = d/dx1 [ nu(phi) (1 + U'^2/2)^((p-2)/2) U'/2 ] + f_u
    rho phi_t = d2/dx1^2 mu + f_phi,  rho mu = -phi'' + rho Psi'(phi).

Prints Rust expressions for f_u and f_phi.
"""
import sympy as sp

x, t = sp.symbols("x t", real=True)
p, nl, nu_, sh = sp.symbols("p nu_lower nu_upper shape", positive=True)

rho = sp.Rational(3, 2) + sp.Rational(2, 5) * sp.cos(x)
phi = sp.Rational(1, 2) * sp.exp(-t) * (sp.sin(x) + sp.Rational(1, 2)) / (2 + sp.cos(x))
U = sp.cos(t) * sp.sin(x) / (sp.Rational(7, 4) + sp.cos(x))

nu = nl + (nu_ - nl) / (1 + sp.exp(-sh * phi))
Ux = sp.diff(U, x)
stress = nu * (1 + Ux**2 / 2) ** ((p - 2) / 2) * Ux / 2
f_u = rho * sp.diff(U, t) - sp.diff(stress, x)

psi_p = phi**3 - phi
mu = -sp.diff(phi, x, 2) / rho + psi_p
f_phi = rho * sp.diff(phi, t) - sp.diff(mu, x, 2)



def emit(e):
    """Fully parenthesized f64 Rust expression."""
    if e.is_Symbol:
        return e.name
    if e.is_Integer:
        return f"{int(e)}.0"
    if e.is_Rational:
        return f"({e.p}.0 / {e.q}.0)"
    if e.is_Add:
        return "(" + " + ".join(emit(a) for a in e.args) + ")"
    if e.is_Mul:
        return "(" + " * ".join(emit(a) for a in e.args) + ")"
    if e.is_Pow:
        b, k = e.args
        if k.is_Integer:
            return f"{emit(b)}.powi({int(k)})"
        if k == sp.Rational(1, 2):
            return f"{emit(b)}.sqrt()"
        return f"{emit(b)}.powf({emit(k)})"
    for fn in ("sin", "cos", "exp"):
        if isinstance(e, getattr(sp, fn)):
            return f"{emit(e.args[0])}.{fn}()"
    raise TypeError(e)


for name, expr in [("f_u", f_u), ("f_phi", f_phi)]:
    subs, (red,) = sp.cse(expr)
    print(f"// {name}")
    for s, e in subs:
        print(f"let {s} = {emit(e)};")
    print(emit(red))
    print()
