// Typed client for the session service. Shapes mirror the JSON bodies
// exactly; nothing is renamed or defaulted on this side.

export interface DatasetInfo {
    name: string;
    n_samples: number;
    n_classes: number;
    d_cont: number;
    n_categorical: number;
    class_names: string[];
    render: string;
}

export interface ScatterPayload {
    point: number[];
    pool: number[][];
    labeled: { xy: number[]; label: number }[];
}

export interface ImagePayload {
    width: number;
    height: number;
    pixels: number[];
}

export interface TablePayload {
    rows: [string, string | number][];
}

export interface RenderSpec {
    kind: string;
    payload: unknown;
}

export interface QuerySample {
    id: number;
    features: (number | string)[];
    render: RenderSpec;
}

export interface QueriesResponse {
    round: number;
    done: boolean;
    samples: QuerySample[];
}

export interface CurvePoint {
    n: number;
    test_acc: number;
}

export interface StateResponse {
    dataset: string;
    strategy: string;
    kernel: string;
    labeled_count: number;
    budget: number;
    round: number;
    done: boolean;
    learning_curve: CurvePoint[];
    weights_4ds: [number, number, number];
    class_names: string[];
}

export interface CreateSessionRequest {
    dataset: string;
    strategy?: string;
    kernel?: string;
    budget: number;
    k?: number;
    seed?: number;
}

export interface LabelsResponse {
    accepted: number;
    next_round: number;
}

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

async function asJson<T>(response: Response): Promise<T> {
    if (!response.ok) {
        let detail = response.statusText;
        try {
            const body = await response.json();
            if (typeof body.detail === "string") detail = body.detail;
        } catch {
            // non-JSON error body: keep the status text
        }
        throw new ApiError(response.status, detail);
    }
    return response.json() as Promise<T>;
}

export class ApiClient {
    constructor(private base: string = "") {}

    listDatasets(): Promise<{ datasets: DatasetInfo[] }> {
        return fetch(`${this.base}/datasets`).then((r) =>
            asJson<{ datasets: DatasetInfo[] }>(r),
        );
    }

    createSession(body: CreateSessionRequest): Promise<{ session_id: string }> {
        return fetch(`${this.base}/sessions`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        }).then((r) => asJson<{ session_id: string }>(r));
    }

    queries(sessionId: string): Promise<QueriesResponse> {
        return fetch(`${this.base}/sessions/${sessionId}/queries`).then((r) =>
            asJson<QueriesResponse>(r),
        );
    }

    state(sessionId: string): Promise<StateResponse> {
        return fetch(`${this.base}/sessions/${sessionId}/state`).then((r) =>
            asJson<StateResponse>(r),
        );
    }

    postLabels(
        sessionId: string,
        labels: Record<number, number>,
    ): Promise<LabelsResponse> {
        return fetch(`${this.base}/sessions/${sessionId}/labels`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ labels }),
        }).then((r) => asJson<LabelsResponse>(r));
    }
}
