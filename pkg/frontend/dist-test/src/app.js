// Page wiring: fetch -> render -> swap, with one in-flight action at a time
// and read-only background polling.
import { ApiError } from "./api.js";
import { renderErrorBanner, renderTimeline, renderView } from "./render.js";
const POLL_INTERVAL_MS = 1000;
const ANOMALY_WINDOW = 10;
export class App {
    constructor(client, sessionId, root, timelineRoot) {
        this.client = client;
        this.sessionId = sessionId;
        this.root = root;
        this.timelineRoot = timelineRoot;
        this.view = null;
        this.actionInFlight = false;
        this.banner = "";
    }
    static async boot(client, root, timelineRoot, scenario) {
        const { session_id } = await client.createSession(scenario);
        const app = new App(client, session_id, root, timelineRoot);
        await app.refresh();
        setInterval(() => void app.refresh(), POLL_INTERVAL_MS);
        root.addEventListener("click", (ev) => void app.onClick(ev));
        root.addEventListener("change", (ev) => void app.onChange(ev));
        return app;
    }
    render() {
        if (!this.view)
            return;
        this.root.innerHTML = this.banner + renderView(this.view);
    }
    async refresh() {
        try {
            this.view = await this.client.view(this.sessionId);
            const [trace, anomalies] = await Promise.all([
                this.client.trace(this.sessionId),
                this.client.anomalies(this.sessionId, ANOMALY_WINDOW),
            ]);
            this.timelineRoot.innerHTML = renderTimeline(trace, anomalies);
            this.render();
        }
        catch (err) {
            this.banner = renderErrorBanner(`fetch failed: ${String(err)}`, true);
            this.render();
        }
    }
    async onClick(ev) {
        const target = ev.target;
        if (target.classList.contains("stage")) {
            if (target.disabled)
                return;
            await this.send({ click_stage: target.dataset.path ?? "" });
        }
        else if (target.classList.contains("option")) {
            await this.send({ choose: target.dataset.choice ?? "" });
        }
        else if (target.classList.contains("retry")) {
            this.banner = "";
            await this.refresh();
        }
    }
    async onChange(ev) {
        const target = ev.target;
        if (!target.classList.contains("attr-control"))
            return;
        await this.send({ set_attribute: target.dataset.path ?? "", value: target.value });
    }
    async send(action) {
        if (this.actionInFlight)
            return;
        this.actionInFlight = true;
        try {
            this.view = await this.client.action(this.sessionId, action);
            this.banner = "";
            this.render();
        }
        catch (err) {
            if (err instanceof ApiError) {
                // e.g. the door is closed: show why, keep the screen as it was
                this.banner = renderErrorBanner(err.message);
            }
            else {
                this.banner = renderErrorBanner(`network failure: ${String(err)}`, true);
            }
            this.render();
        }
        finally {
            this.actionInFlight = false;
        }
    }
}
