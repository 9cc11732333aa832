//! Static plot scripts, one per figure preset. Each script only reads the
//! CSVs next to it and writes a PNG; no interactivity and no recomputation.

use std::fs;
use std::path::Path;

use crate::config::Config;
use crate::CliError;

const PREAMBLE: &str = r#"#!/usr/bin/env python3
"""Rendering script generated by the aqis runner; reads only local CSVs."""
import csv
import math
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(name):
    with open(name, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def col(rows, key):
    return [float(r[key]) for r in rows]
"#;

fn script_for(figure: &str) -> Option<String> {
    let body = match figure {
        "fig1" => {
            r#"
rows = load("spectrum_flow.csv")
fig, ax = plt.subplots(figsize=(6, 4))
for parity, style in (("even", "--"), ("odd", "-")):
    sel = [r for r in rows if r["parity"] == parity]
    by_k = {}
    for r in sel:
        by_k.setdefault(int(r["k"]), []).append((float(r["g"]), float(r["delta_e"])))
    for pts in by_k.values():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], style, lw=0.4, color="C0")
ax.set_xlabel("g")
ax.set_ylabel("E_k(g) - E_0(g)")
fig.tight_layout()
fig.savefig("fig1.png", dpi=200)
"#
        }
        "fig2" => {
            r#"
fig, axes = plt.subplots(2, 2, figsize=(9, 7))
ini = load("order_distribution_initial.csv")
fin = load("order_distribution_final.csv")
axes[0, 0].plot(col(ini, "support_value"), col(ini, "probability"), label="initial")
axes[0, 0].plot(col(fin, "support_value"), col(fin, "probability"), label="final")
axes[0, 0].set_xlabel("S_x")
axes[0, 0].set_ylabel("P(S_x)")
axes[0, 0].legend()
ini = load("energy_distribution_initial.csv")
fin = load("energy_distribution_final.csv")
axes[0, 1].plot(col(ini, "support_value"), col(ini, "probability"), "o", label="initial")
axes[0, 1].plot(col(fin, "support_value"), col(fin, "probability"), "+", label="final")
axes[0, 1].set_xlabel("E")
axes[0, 1].set_ylabel("P(E)")
axes[0, 1].legend()
traj = load("trajectory.csv")
half = len(traj) // 2
axes[1, 0].plot(col(traj[:half], "g"), col(traj[:half], "obs_sx_or_x"), label="forward")
axes[1, 0].plot(col(traj[half:], "g"), col(traj[half:], "obs_sx_or_x"), label="backward")
axes[1, 0].set_xlabel("g(t)")
axes[1, 0].set_ylabel("<S_x>")
axes[1, 0].legend()
axes[1, 1].plot(col(traj, "t"), col(traj, "obs_sz_or_sigmaz"), label="<S_z>")
axes[1, 1].plot(col(traj, "t"), col(traj, "energy"), label="energy")
axes[1, 1].set_xlabel("t")
axes[1, 1].legend()
fig.tight_layout()
fig.savefig("fig2.png", dpi=200)
"#
        }
        "fig3" => {
            r#"
rows = load("uniformity.csv")
phases = col(rows, "delta_phi_mod_2pi")
fig, axes = plt.subplots(1, 2, figsize=(9, 4))
axes[0].plot([math.cos(p) for p in phases], [math.sin(p) for p in phases], "o", ms=3)
axes[0].add_artist(plt.Circle((0, 0), 1.0, fill=False, color="gray"))
axes[0].set_xlim(-1.2, 1.2)
axes[0].set_ylim(-1.2, 1.2)
axes[0].set_aspect("equal")
axes[0].set_xlabel("cos(delta phi)")
axes[0].set_ylabel("sin(delta phi)")
axes[1].hist(phases, bins=20, range=(0, 2 * math.pi), density=True)
axes[1].axhline(1.0 / (2 * math.pi), color="k", ls="--")
axes[1].set_xlabel("delta phi mod 2 pi")
axes[1].set_ylabel("density")
fig.tight_layout()
fig.savefig("fig3.png", dpi=200)
"#
        }
        "fig4" => {
            r#"
import glob
fig, axes = plt.subplots(1, 2, figsize=(9, 4))
for name in sorted(glob.glob("tau_sweep_nmc*.csv")):
    rows = load(name)
    label = name.replace("tau_sweep_nmc", "N_mc=").replace(".csv", "")
    axes[0].plot(col(rows, "tau"), col(rows, "expectation"), lw=0.7, label=label)
axes[0].set_xlabel("tau")
axes[0].set_ylabel("<S_x(2 tau)>")
axes[0].legend()
rows = [r for r in load("sweep.csv") if r["std"]]
x = col(rows, "value")
y = col(rows, "std")
axes[1].loglog(x, y, "o")
try:
    fit = load("fit.csv")[0]
    exp, pre = float(fit["exponent"]), float(fit["prefactor"])
    axes[1].loglog(x, [pre * v**exp for v in x], "--", label=f"slope {exp:.2f}")
    axes[1].legend()
except FileNotFoundError:
    pass
axes[1].set_xlabel("N_mc")
axes[1].set_ylabel("sigma(S_x)")
fig.tight_layout()
fig.savefig("fig4.png", dpi=200)
"#
        }
        "fig5" => {
            r#"
import glob
echoes = sorted(glob.glob("echo_nmc*.csv"), key=lambda n: int(n[8:-4]))
otocs = sorted(glob.glob("otoc_nmc*.csv"), key=lambda n: int(n[8:-4]))
fig, axes = plt.subplots(1, len(echoes) + 1, figsize=(4 * (len(echoes) + 1), 3.5))
for ax, name in zip(axes, echoes):
    rows = load(name)
    dt = col(rows, "dt")
    ax.loglog(dt, col(rows, "L"), lw=0.8)
    ax.loglog(dt, [min(1.0, 1.0 / t) for t in dt], "k--", lw=0.8, label="1/dt")
    ax.set_ylim(1e-4, 2)
    ax.set_xlabel("dt")
    ax.set_ylabel("L(dt)")
    ax.set_title(name.replace("echo_nmc", "N_mc=").replace(".csv", ""))
    ax.legend()
for name in otocs:
    rows = load(name)
    label = name.replace("otoc_nmc", "N_mc=").replace(".csv", "")
    axes[-1].plot(col(rows, "tau"), col(rows, "rescaled"), lw=0.7, label=label)
axes[-1].set_xlabel("tau")
axes[-1].set_ylabel("|O(2 tau)| / O(0)")
axes[-1].legend()
fig.tight_layout()
fig.savefig("fig5.png", dpi=200)
"#
        }
        "fig6" => {
            r#"
import glob
fig, axes = plt.subplots(2, 2, figsize=(9, 7))
ini = load("order_distribution_initial.csv")
fin = load("order_distribution_final.csv")
axes[0, 0].plot(col(ini, "support_value"), col(ini, "probability"), label="initial")
axes[0, 0].plot(col(fin, "support_value"), col(fin, "probability"), "s", ms=2, label="final")
axes[0, 0].set_xlabel("S_x")
axes[0, 0].set_ylabel("P(S_x)")
axes[0, 0].legend()
rows = load("energy_distribution_initial.csv")
axes[0, 1].semilogy(
    col(rows, "support_value"),
    [max(p, 1e-300) for p in col(rows, "probability")],
)
axes[0, 1].set_ylim(1e-6, 1)
axes[0, 1].set_xlabel("E")
axes[0, 1].set_ylabel("P(E)")
for name in sorted(glob.glob("tau_sweep_g1_*.csv")):
    rows = load(name)
    label = name.replace("tau_sweep_g1_", "g1=").replace(".csv", "")
    axes[1, 0].plot(col(rows, "tau"), col(rows, "expectation"), lw=0.7, label=label)
axes[1, 0].set_xlabel("tau")
axes[1, 0].set_ylabel("<S_x(2 tau)>")
axes[1, 0].legend()
rows = load("order_parameter.csv")
axes[1, 1].errorbar(col(rows, "g1"), col(rows, "mean"), yerr=col(rows, "std"), fmt="o-")
axes[1, 1].set_xlabel("g1")
axes[1, 1].set_ylabel("mean <S_x(2 tau)>")
fig.tight_layout()
fig.savefig("fig6.png", dpi=200)
"#
        }
        "fig7" => {
            r#"
import glob
fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
rows = load("energy_distribution_initial.csv")
axes[0].plot([e / 100.0 for e in col(rows, "support_value")], col(rows, "probability"))
axes[0].axvline(-0.5, color="k", ls="--")
axes[0].set_xlim(-1.1, 0.0)
axes[0].set_xlabel("E / Omega")
axes[0].set_ylabel("P(E)")
for name in sorted(glob.glob("tau_sweep_g1_*.csv")):
    rows = load(name)
    label = name.replace("tau_sweep_g1_", "g1=").replace(".csv", "")
    axes[1].plot(col(rows, "tau"), col(rows, "expectation"), lw=0.7, label=label)
axes[1].set_xlabel("tau")
axes[1].set_ylabel("<x(2 tau)>")
axes[1].legend()
rows = load("order_parameter.csv")
axes[2].errorbar(col(rows, "g1"), col(rows, "mean"), yerr=col(rows, "std"), fmt="o-")
axes[2].set_xlabel("g1")
axes[2].set_ylabel("mean <x(2 tau)>")
fig.tight_layout()
fig.savefig("fig7.png", dpi=200)
"#
        }
        _ => return None,
    };
    Some(format!("{PREAMBLE}{body}"))
}

/// Writes the plotting script matching the run's figure tag, if any.
pub fn emit_plot_scripts(config: &Config, out_dir: &Path) -> Result<(), CliError> {
    let Some(figure) = &config.figure else {
        return Ok(());
    };
    let Some(script) = script_for(figure) else {
        return Err(CliError::Config(format!("figure: unknown preset tag {figure:?}")));
    };
    fs::write(out_dir.join(format!("plot_{figure}.py")), script)?;
    Ok(())
}
