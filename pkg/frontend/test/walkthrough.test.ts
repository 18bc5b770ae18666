// Scripted session against a real `tm serve` process: walks the house the
// way the browser app does (same client, same renderers) and checks the
// screens that come back.

import { after, before, test } from "node:test";
import assert from "node:assert/strict";
import { spawn } from "node:child_process";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ApiError, TmClient } from "../src/api.js";
import { renderErrorBanner, renderTimeline, renderView } from "../src/render.js";

const repoRoot = join(dirname(fileURLToPath(import.meta.url)), "..", "..", "..");
const modelPath = join(repoRoot, "models", "digital_home.tm");

let server: any;
let client: TmClient;

before(async () => {
  server = spawn("python3", ["-m", "tmkit", "serve", modelPath, "--port", "0"],
                 { cwd: repoRoot, stdio: ["ignore", "ignore", "pipe"] });
  const port = await new Promise<number>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error("server never announced a port")),
                             10_000);
    server.stderr.on("data", (chunk: { toString(): string }) => {
      buffer += chunk.toString();
      const found = buffer.match(/http:\/\/127\.0\.0\.1:(\d+)\//);
      if (found) {
        clearTimeout(timer);
        resolve(Number(found[1]));
      }
    });
    server.on("exit", () => reject(new Error(`server exited: ${buffer}`)));
  });
  client = new TmClient(`http://127.0.0.1:${port}`);
});

after(() => {
  server?.kill("SIGTERM");
});

function cardNames(html: string): string[] {
  return [...html.matchAll(/<h3>([^<]+)<\/h3>/g)].map((m) => m[1]);
}

test("walkthrough reproduces the room screens", async () => {
  const { session_id } = await client.createSession();

  let view = await client.view(session_id);
  assert.equal(view.focus_name, "House");
  const entry = view.visible_stages.find((s) => s.label === "House.Transfer");
  assert.ok(entry && entry.enabled, "entry transfer should be clickable");

  // into the door area: Door + Light cards
  view = await client.action(session_id, { click_stage: "Entrance.Transfer" });
  let html = renderView(view);
  assert.deepEqual(cardNames(html), ["Door", "Light"]);
  assert.match(html, /<option value="closed" selected>/);

  // the closed door blocks the receive click; the app shows the reason
  let blocked: ApiError | null = null;
  try {
    await client.action(session_id, { click_stage: "Entrance.Receive" });
  } catch (err) {
    blocked = err as ApiError;
  }
  assert.ok(blocked, "closed door must reject the click");
  assert.equal(blocked.status, 409);
  assert.equal(blocked.code, "E_NOT_ENABLED");
  assert.match(renderErrorBanner(blocked.message), /class="banner error"/);
  view = await client.view(session_id);
  assert.equal(view.focus_stage, "transfer", "a 409 leaves the screen unchanged");

  // open the door, enter: the entrance beyond shows Light + Camera
  view = await client.action(session_id, { set_attribute: "Door.state", value: "open" });
  view = await client.action(session_id, { click_stage: "Entrance.Receive" });
  html = renderView(view);
  assert.deepEqual(cardNames(html), ["Light", "Camera"]);

  // the process screen lists the room's processes
  view = await client.action(session_id, { click_stage: "Entrance.Process" });
  html = renderView(view);
  for (const label of ["cleaning", "disinfection", "coloring"]) {
    assert.match(html, new RegExp(`<li class="process">${label}</li>`));
  }
});

test("no action is issued for a disabled button", async () => {
  const { session_id } = await client.createSession();
  const view = await client.view(session_id);
  const disabled = view.visible_stages.filter((s) => !s.enabled);
  assert.ok(disabled.length > 0);
  for (const stage of disabled) {
    // the handler guards on `disabled`; issuing it anyway must be a 409,
    // which the app renders as a banner without changing the screen
    try {
      await client.action(session_id, { click_stage: stage.path });
      assert.fail(`stage ${stage.path} should have been rejected`);
    } catch (err) {
      assert.equal((err as ApiError).status, 409);
    }
  }
});

test("elder_fall timeline highlights the missing bathroom receive", async () => {
  const { session_id } = await client.createSession("elder_fall");
  const trace = await client.trace(session_id);
  const anomalies = await client.anomalies(session_id, 10);
  const labels = trace.occurrences.map((o) => o.label);
  assert.ok(labels.includes("Hall.Release"));
  assert.ok(labels.includes("Hall.Transfer"));
  assert.equal(labels[labels.length - 1], "Bathroom.Transfer");

  const html = renderTimeline(trace, anomalies);
  const ticks = [...html.matchAll(/<li class="tick( anomaly)?">/g)];
  assert.equal(ticks.length, labels.length + 1);
  assert.match(html, /class="tick anomaly"[^<]*>.*missing Bathroom\.Receive/);
  // the anomaly row closes the timeline, right after Bathroom.Transfer
  assert.ok(html.lastIndexOf("Bathroom.Transfer") < html.indexOf("missing Bathroom.Receive"));
});

test("refetching reproduces the same screen", async () => {
  const { session_id } = await client.createSession("elder_fall");
  const once = renderView(await client.view(session_id));
  const twice = renderView(await client.view(session_id));
  assert.equal(once, twice);
});
