import init, { exploreAr1, simulateAndTest, graphFromStats } from "./pkg/tailgraph_web.js";

const $ = (id) => document.getElementById(id);
const SVG = "http://www.w3.org/2000/svg";

function fmt(v) {
  return v === null ? "-" : Math.abs(v) < 5e-13 ? "0" : v.toFixed(4);
}

function table(names, rows) {
  const head = "<tr><th></th>" + names.map((n) => `<th>${n}</th>`).join("") + "</tr>";
  const body = rows
    .map((r, i) => `<tr><th>${names[i]}</th>` + r.map((v) => `<td>${fmt(v)}</td>`).join("") + "</tr>")
    .join("");
  return `<table>${head}${body}</table>`;
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    out.innerHTML = `<p class="err">${e.message ?? e}</p>`;
  }
}

// Nodes on a circle, edge width proportional to |t|.
function drawGraph(svg, graph) {
  svg.replaceChildren();
  const w = +svg.getAttribute("width");
  const c = w / 2, r = w / 2 - 30, k = graph.nodes.length;
  const pos = graph.nodes.map((_, i) => {
    const a = (2 * Math.PI * i) / k - Math.PI / 2;
    return [c + r * Math.cos(a), c + r * Math.sin(a)];
  });
  const max = Math.max(1e-12, ...graph.edges.map((e) => Math.abs(e[2])));
  for (const [i, j, t] of graph.edges) {
    const line = document.createElementNS(SVG, "line");
    line.setAttribute("x1", pos[i][0]);
    line.setAttribute("y1", pos[i][1]);
    line.setAttribute("x2", pos[j][0]);
    line.setAttribute("y2", pos[j][1]);
    line.setAttribute("stroke", t < 0 ? "#c44" : "#36c");
    line.setAttribute("stroke-width", (6 * Math.abs(t)) / max);
    const title = document.createElementNS(SVG, "title");
    title.textContent = `t = ${t.toFixed(3)}`;
    line.appendChild(title);
    svg.appendChild(line);
  }
  graph.nodes.forEach((name, i) => {
    const g = document.createElementNS(SVG, "g");
    const dot = document.createElementNS(SVG, "circle");
    dot.setAttribute("cx", pos[i][0]);
    dot.setAttribute("cy", pos[i][1]);
    dot.setAttribute("r", 14);
    dot.setAttribute("fill", "#fff");
    dot.setAttribute("stroke", "#333");
    const label = document.createElementNS(SVG, "text");
    label.setAttribute("x", pos[i][0]);
    label.setAttribute("y", pos[i][1] + 4);
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("font-size", 11);
    label.textContent = name;
    g.append(dot, label);
    svg.appendChild(g);
  });
}

function explore() {
  const phi = +$("ex-phi").value;
  $("ex-phi-v").textContent = phi.toFixed(2);
  guard($("ex-out"), () => {
    const v = JSON.parse(exploreAr1(phi, +$("ex-p").value));
    $("ex-out").innerHTML =
      `<div class="row"><div><h3>Inner product matrix</h3>${table(v.names, v.gamma)}</div>` +
      `<div><h3>Inverse</h3>${table(v.names, v.precision)}</div>` +
      `<div><h3>Partial tail correlation</h3>${table(v.names, v.ptc)}</div></div>` +
      `<p>Weights predicting ${v.names.at(-1)}: (${v.weights.map(fmt).join(", ")})</p>`;
  });
}

function simulate() {
  const out = $("sim-out");
  out.textContent = "Running...";
  // Let the status paint before the synchronous call.
  setTimeout(() =>
    guard(out, () => {
      const v = JSON.parse(
        simulateAndTest(+$("sim-phi").value, +$("sim-p").value, +$("sim-n").value, BigInt($("sim-seed").value), +$("sim-alpha").value),
      );
      drawGraph($("sim-svg"), v.graph);
      const rows = v.pairs
        .map(([i, j, t, rej]) => `<tr><td>${v.graph.nodes[i]}-${v.graph.nodes[j]}</td><td>${t.toFixed(3)}</td><td>${rej ? "reject" : ""}</td></tr>`)
        .join("");
      out.innerHTML = `<p>critical value ${v.critical_value.toFixed(4)} (df ${v.df})</p><table><tr><th>pair</th><th>t</th><th></th></tr>${rows}</table>`;
    }),
  );
}

function stats() {
  const cv = +$("st-cv").value;
  $("st-cv-v").textContent = cv.toFixed(3);
  guard($("st-dot"), () => {
    const v = JSON.parse(graphFromStats($("st-csv").value, cv, 5));
    drawGraph($("st-svg"), v);
    $("st-dot").textContent = v.dot;
  });
}

await init();
$("status").textContent = "";
$("ex-phi").addEventListener("input", explore);
$("ex-p").addEventListener("change", explore);
$("sim-run").addEventListener("click", simulate);
$("st-cv").addEventListener("input", stats);
$("st-csv").addEventListener("input", stats);
explore();
stats();
