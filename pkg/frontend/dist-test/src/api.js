// Typed client for the tm serve JSON API. The UI keeps no semantic state of
// its own: everything rendered derives from the last fetched payloads.
export class ApiError extends Error {
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
    }
}
async function parseError(resp) {
    try {
        const body = await resp.json();
        return new ApiError(resp.status, body.code ?? "E_UNKNOWN", body.message ?? resp.statusText);
    }
    catch {
        return new ApiError(resp.status, "E_UNKNOWN", resp.statusText);
    }
}
export class TmClient {
    constructor(base = "") {
        this.base = base;
    }
    async get(path) {
        const resp = await fetch(this.base + path);
        if (!resp.ok)
            throw await parseError(resp);
        return resp.json();
    }
    async post(path, body) {
        const resp = await fetch(this.base + path, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (!resp.ok)
            throw await parseError(resp);
        return resp.json();
    }
    createSession(scenario) {
        return this.post("/sessions", scenario ? { scenario } : {});
    }
    view(sessionId) {
        return this.get(`/sessions/${sessionId}/view`);
    }
    action(sessionId, action) {
        return this.post(`/sessions/${sessionId}/action`, action);
    }
    trace(sessionId) {
        return this.get(`/sessions/${sessionId}/trace`);
    }
    anomalies(sessionId, window = 10) {
        return this.get(`/sessions/${sessionId}/anomalies?window=${window}`);
    }
}
