import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
    });
}

describe("api client", () => {
    afterEach(() => {
        vi.unstubAllGlobals();
    });

    it("hits the documented endpoints with JSON bodies", async () => {
        const calls: { url: string; init?: RequestInit }[] = [];
        vi.stubGlobal("fetch", (url: string, init?: RequestInit) => {
            calls.push({ url, init });
            return Promise.resolve(jsonResponse({ session_id: "s" }));
        });
        const api = new ApiClient("http://host:9");
        await api.createSession({ dataset: "iris", budget: 12 });
        await api.queries("s");
        await api.state("s");
        await api.postLabels("s", { 3: 1 });
        expect(calls.map((c) => c.url)).toEqual([
            "http://host:9/sessions",
            "http://host:9/sessions/s/queries",
            "http://host:9/sessions/s/state",
            "http://host:9/sessions/s/labels",
        ]);
        expect(JSON.parse(calls[0].init!.body as string)).toEqual(
            { dataset: "iris", budget: 12 },
        );
        expect(JSON.parse(calls[3].init!.body as string)).toEqual(
            { labels: { 3: 1 } },
        );
    });

    it("surfaces the service's error detail", async () => {
        vi.stubGlobal("fetch", () =>
            Promise.resolve(jsonResponse({ detail: "unknown dataset 'nope'" }, 404)),
        );
        const api = new ApiClient();
        const failure = api.listDatasets();
        await expect(failure).rejects.toBeInstanceOf(ApiError);
        await expect(failure).rejects.toThrow("unknown dataset 'nope'");
    });

    it("keeps the status text when the error body is not JSON", async () => {
        vi.stubGlobal("fetch", () =>
            Promise.resolve(new Response("<html>", { status: 502, statusText: "Bad Gateway" })),
        );
        const api = new ApiClient();
        await expect(api.queries("s")).rejects.toThrow("Bad Gateway");
    });
});
