import { TmClient } from "./api.js";
import { App } from "./app.js";
const params = new URLSearchParams(window.location.search);
const scenario = params.get("scenario") ?? undefined;
const root = document.getElementById("app");
const timeline = document.getElementById("timeline");
if (!root || !timeline) {
    throw new Error("index.html is missing #app / #timeline containers");
}
App.boot(new TmClient(), root, timeline, scenario).catch((err) => {
    root.innerHTML = `<div class="banner error">cannot start session: ${String(err)}</div>`;
});
