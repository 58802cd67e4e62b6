"""Pure-Neumann problem: filtered vs unfiltered CMCG against the direct solver, over a few meshes."""

from cmcg.controllability import CmcgOptions, cmcg_solve
from cmcg.fem import l2_error
from cmcg.helmholtz_ref import assemble_helmholtz, direct_solve
from cmcg.scenarios import neumann_1d


def main():
    print(f"{'n':>4} {'direct':>11} {'filtered':>11} {'unfiltered':>11} {'eta':>10}")
    for n in (8, 16, 32, 64):
        p = neumann_1d(n)
        res = cmcg_solve(p, CmcgOptions(order=2, tol=1e-10, max_iter=2000))
        sp = res.system.space
        e_dir = l2_error(sp, direct_solve(assemble_helmholtz(res.system, lumped=True)), p.exact)
        print(f"{n:4d} {e_dir:11.3e} {l2_error(sp, res.u, p.exact):11.3e} "
              f"{l2_error(sp, res.u_unfiltered, p.exact):11.3e} {res.filtered.eta:10.2e}")


if __name__ == "__main__":
    main()
