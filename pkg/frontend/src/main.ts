import { ApiError, SessionClient } from "./api.js";
import { sparklineSvg } from "./chart.js";
import { formatValue } from "./format.js";
import { SessionStore, type SessionView } from "./store.js";
import { SessionStream } from "./stream.js";
import type { Choice, StatePayload } from "./types.js";

const client = new SessionClient("");
const store = new SessionStore();
let stream: SessionStream | null = null;

function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function actionLabel(state: StatePayload, action: number): string {
  return state.env.action_labels[action] ?? String(action);
}

function stateStrip(state: StatePayload): string {
  const labels = state.env.state_labels;
  if (labels.length > 12) {
    // many-state environments read better as a stock gauge
    const fraction = state.x / (state.env.n_states - 1);
    return `
      <div class="gauge" title="stock level ${escapeHtml(state.state_label)}">
        <div class="gauge-fill" style="width:${(fraction * 100).toFixed(1)}%"></div>
        <span class="gauge-label">stock ${escapeHtml(state.state_label)} / ${labels.length - 1}</span>
      </div>`;
  }
  const cells = labels
    .map((label, index) => {
      const classes = ["cell"];
      if (index === state.x) classes.push("active");
      if (label === "8") classes.push("broken");
      const title = label === "8" ? "broken" : label === "S" ? "short repair" : label === "L" ? "long repair" : `condition ${label}`;
      return `<span class="${classes.join(" ")}" title="${title}">${escapeHtml(label)}</span>`;
    })
    .join("");
  return `<div class="strip">${cells}</div>`;
}

function cards(state: StatePayload): string {
  const recommended = actionLabel(state, state.u_r);
  const baseline = actionLabel(state, state.u_b);
  if (state.u_r === state.u_b) {
    return `
      <div class="card merged">
        <h3>recommendation matches baseline</h3>
        <p class="big">${escapeHtml(recommended)}</p>
        <p class="hint">uninformative for the adherence estimate</p>
      </div>`;
  }
  return `
    <div class="card recommend">
      <h3>recommended</h3>
      <p class="big">${escapeHtml(recommended)}</p>
    </div>
    <div class="card baseline">
      <h3>baseline</h3>
      <p class="big">${escapeHtml(baseline)}</p>
    </div>`;
}

function whatIf(state: StatePayload): string {
  const rows = state.q_row
    .map((value, action) => {
      if (!state.admissible.includes(action)) return "";
      const marks = [];
      if (action === state.u_r) marks.push("rec");
      if (action === state.u_b) marks.push("base");
      return `<tr>
        <td>${escapeHtml(actionLabel(state, action))}</td>
        <td class="num">${formatValue(value)}</td>
        <td>${marks.join(" ")}</td>
      </tr>`;
    })
    .join("");
  return `<table class="whatif"><thead><tr><th>action</th><th>Q</th><th></th></tr></thead><tbody>${rows}</tbody></table>`;
}

function chartsBlock(view: SessionView): string {
  return `
    <div class="charts">
      <figure><figcaption>adherence estimate</figcaption>${sparklineSvg(view.thetaSeries)}</figure>
      <figure><figcaption>reward</figcaption>${sparklineSvg(view.rewardSeries)}</figure>
      <figure><figcaption>tracked initial-state value</figcaption>${sparklineSvg(view.valueSeries)}</figure>
    </div>`;
}

function render(view: SessionView): void {
  const app = document.getElementById("app");
  if (!app) return;
  const state = view.session;
  if (!state) {
    app.innerHTML = `<p class="hint">starting session…</p>`;
    return;
  }
  const disabled = view.submitting ? "disabled" : "";
  app.innerHTML = `
    <header>
      <h1>${escapeHtml(state.env.name)}</h1>
      <div class="meta">
        <span>round ${state.step}</span>
        <span>&theta;&#770; = <strong>${escapeHtml(view.thetaText)}</strong> (n=${state.n})</span>
        <span class="${view.connected ? "live" : "offline"}">${view.connected ? "live" : "reconnecting"}</span>
      </div>
    </header>
    ${stateStrip(state)}
    <section class="round">${cards(state)}</section>
    <section class="controls">
      <button id="adhere" ${disabled}>follow recommendation</button>
      <button id="override" ${disabled}>keep baseline</button>
      ${view.lastObservation ? `<span class="obs">last round: ${view.lastObservation}</span>` : ""}
      ${view.error ? `<span class="error">${escapeHtml(view.error)}</span>` : ""}
    </section>
    <section class="panels">
      <div><h2>what the learner values here</h2>${whatIf(state)}</div>
      <div><h2>session</h2>${chartsBlock(view)}</div>
    </section>`;
  document.getElementById("adhere")?.addEventListener("click", () => submit("adhere"));
  document.getElementById("override")?.addEventListener("click", () => submit("baseline"));
}

async function submit(choice: Choice): Promise<void> {
  const state = store.getView().session;
  if (!state) return;
  if (!store.beginSubmit()) return; // a round is already in flight
  try {
    const delta = await client.act(state.id, { step: state.step, choice });
    store.applyDelta(delta);
    store.endSubmit();
  } catch (error) {
    if (error instanceof ApiError && error.status === 409) {
      // stale round (double submit or replayed request): re-pull the truth
      await resync(state.id);
      store.endSubmit();
      return;
    }
    store.endSubmit(error instanceof Error ? error.message : String(error));
  }
}

async function resync(id: string): Promise<void> {
  const [state, history] = await Promise.all([client.getState(id), client.historyCsv(id)]);
  store.resync(state, history);
}

function watch(id: string): void {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  stream?.close();
  stream = new SessionStream(`${scheme}://${location.host}/sessions/${id}/stream`, {
    onOpen: () => {
      store.setConnected(true);
      void resync(id);
    },
    onClose: () => store.setConnected(false),
    onMessage: (message) => {
      if (message.type === "step") store.applyDelta(message);
    },
  });
  stream.connect();
}

async function boot(): Promise<void> {
  store.subscribe(render);
  const params = new URLSearchParams(location.search);
  const existing = location.hash.replace(/^#/, "");
  if (existing) {
    try {
      await resync(existing);
      watch(existing);
      return;
    } catch {
      location.hash = "";
    }
  }
  const created = await client.createSession({
    env: params.get("env") ?? "machine_replacement",
    seed: Number(params.get("seed") ?? Math.floor(Math.random() * 1_000_000)),
    learner: { epsilon: Number(params.get("epsilon") ?? 0.1) },
  });
  location.hash = created.id;
  store.applyCreate(created.state);
  watch(created.id);
}

void boot();
