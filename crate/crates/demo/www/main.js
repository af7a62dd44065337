import init, { fixture_costs, solve_case_study, anneal_histogram, dynamic_range_sweep } from "./pkg/hamflow_demo.js";

const $ = (id) => document.getElementById(id);

function fail(target, err) {
  target.innerHTML = "";
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = String(err);
  target.append(p);
}

function table(head, rows) {
  const t = document.createElement("table");
  const tr = t.insertRow();
  for (const h of head) {
    const th = document.createElement("th");
    th.textContent = h;
    tr.append(th);
  }
  for (const r of rows) {
    const row = t.insertRow();
    for (const c of r) row.insertCell().textContent = c;
  }
  return t;
}

// long-running calls block the page, so let the "working" text paint first
function run(target, f) {
  target.textContent = "working...";
  setTimeout(() => {
    try {
      f();
    } catch (e) {
      fail(target, e);
    }
  }, 20);
}

function solve() {
  const out = $("solve-out");
  run(out, () => {
    const r = JSON.parse(solve_case_study($("costs").value));
    out.innerHTML = "";
    const p = document.createElement("p");
    p.textContent = `objective ${r.objective.toFixed(2)}${r.optimal ? "" : " (time limit hit)"}, ` +
      `reference schedule ${r.reference_objective.toFixed(2)}, vehicles ${r.vehicles_total}`;
    out.append(p);
    const steps = Array.from({ length: r.steps }, (_, i) => `t${i + 1}`);
    out.append(table(["arc", ...steps], r.vehicles.map((a) => [a.arc, ...a.values])));
  });
}

function anneal() {
  const out = $("anneal-out");
  run(out, () => {
    const r = JSON.parse(anneal_histogram($("costs").value, +$("restarts").value, +$("sweeps").value, +$("seed").value));
    out.innerHTML = "";
    const best = r.best_feasible === null ? "none" : r.best_feasible.toFixed(2);
    const p = document.createElement("p");
    p.textContent = `${r.samples} samples, ${(100 * r.feasible_fraction).toFixed(0)}% feasible, best feasible ${best}`;
    out.append(p);
    const most = Math.max(...r.bins.map((b) => b.count), 1);
    out.append(table(["lower", "upper", "count", ""], r.bins.map((b) => [b.lower.toFixed(1), b.upper.toFixed(1), b.count, ""])));
    const cells = out.querySelectorAll("tr");
    r.bins.forEach((b, i) => {
      const bar = document.createElement("span");
      bar.className = "bar";
      bar.style.width = `${(12 * b.count) / most}rem`;
      cells[i + 1].lastChild.append(bar);
    });
  });
}

function sweep() {
  const out = $("sweep-out");
  run(out, () => {
    const r = JSON.parse(dynamic_range_sweep(+$("amin").value, +$("amax").value, +$("points").value));
    out.innerHTML = "";
    const p = document.createElement("p");
    p.textContent = `default alpha for the fixture costs: ${r.default_alpha.toFixed(1)}`;
    out.append(p);
    out.append(table(["alpha", "dB"], r.rows.map((x) => [x.alpha.toPrecision(4), x.db.toFixed(2)])));
  });
}

await init();
$("costs").value = fixture_costs();
$("reset").onclick = () => ($("costs").value = fixture_costs());
$("solve").onclick = solve;
$("anneal").onclick = anneal;
$("sweep").onclick = sweep;
