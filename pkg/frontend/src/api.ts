// Typed client for the tm serve JSON API. The UI keeps no semantic state of
// its own: everything rendered derives from the last fetched payloads.

export interface StageButton {
  machine: string;
  stage: string;
  path: string;
  label: string;
  enabled: boolean;
}

export interface AttributeControl {
  name: string;
  path: string;
  value: string | number | boolean;
  domain: "enum" | "bool" | "int";
  options: (string | number | boolean)[];
}

export interface MachineCard {
  machine: string;
  name: string;
  attributes: AttributeControl[];
}

export interface PendingChoice {
  label: string;
  options: string[];
}

export interface SessionView {
  session_id: string;
  focus: string;
  focus_name: string;
  focus_stage: string | null;
  visible_stages: StageButton[];
  submachines: MachineCard[];
  available_processes: string[];
  pending_choice: PendingChoice | null;
}

export interface Occurrence {
  event: string;
  label: string;
  time: number;
  step: number;
}

export interface Trace {
  occurrences: Occurrence[];
}

export interface AnomalyReport {
  rule: string;
  token: string;
  from: string;
  expected: string;
  window: number;
  detected_at: number;
}

export interface Anomalies {
  anomalies: AnomalyReport[];
}

export type TmAction =
  | { click_stage: string }
  | { set_attribute: string; value: string | number | boolean }
  | { inject: string; at: string }
  | { choose: string };

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  try {
    const body = await resp.json();
    return new ApiError(resp.status, body.code ?? "E_UNKNOWN",
                        body.message ?? resp.statusText);
  } catch {
    return new ApiError(resp.status, "E_UNKNOWN", resp.statusText);
  }
}

export class TmClient {
  constructor(private base: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) throw await parseError(resp);
    return resp.json() as Promise<T>;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw await parseError(resp);
    return resp.json() as Promise<T>;
  }

  createSession(scenario?: string): Promise<{ session_id: string }> {
    return this.post("/sessions", scenario ? { scenario } : {});
  }

  view(sessionId: string): Promise<SessionView> {
    return this.get(`/sessions/${sessionId}/view`);
  }

  action(sessionId: string, action: TmAction): Promise<SessionView> {
    return this.post(`/sessions/${sessionId}/action`, action);
  }

  trace(sessionId: string): Promise<Trace> {
    return this.get(`/sessions/${sessionId}/trace`);
  }

  anomalies(sessionId: string, window = 10): Promise<Anomalies> {
    return this.get(`/sessions/${sessionId}/anomalies?window=${window}`);
  }
}
