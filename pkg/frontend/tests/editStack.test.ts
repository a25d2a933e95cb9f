import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, FetchLike, RequestRecord } from "../src/api.js";
import { EditStackController } from "../src/editStack.js";

function fakeService(): { fetch: FetchLike; served: RequestRecord[] } {
  const served: RequestRecord[] = [];
  const fetch: FetchLike = async (req) => {
    served.push(req);
    return {
      status: 200,
      json: async () => ({
        image_png: "", mask_png: "", latent_hash: "h",
        scale: (req.body as any)?.scale ?? 0,
        refine_steps: (req.body as any)?.refine_steps ?? 0,
        loss_trace: [],
      }),
      bytes: async () => new Uint8Array(),
    };
  };
  return { fetch, served };
}

describe("EditStackController slider traffic", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("a drag burst produces only debounced /apply calls with refine_steps 0", async () => {
    const { fetch, served } = fakeService();
    const api = new ApiClient(fetch);
    const previews: unknown[] = [];
    const stack = new EditStackController(api, "sess", (r) => previews.push(r), 100);

    // simulate a drag: 30 slider positions, 10 ms apart
    for (let i = 1; i <= 30; i++) {
      stack.setScale("smile", i / 15);
      await vi.advanceTimersByTimeAsync(10);
    }
    await vi.advanceTimersByTimeAsync(300);

    expect(served.length).toBeGreaterThan(0);
    // far fewer requests than slider events, and nothing but /apply
    expect(served.length).toBeLessThanOrEqual(3);
    for (const req of served) {
      expect(req.path).toBe("/sessions/sess/apply");
      expect(req.method).toBe("POST");
      expect((req.body as any).refine_steps).toBe(0);
    }
    const editCalls = api.log.filter((r) => r.path.includes("/edit"));
    expect(editCalls).toHaveLength(0);
    expect(previews.length).toBeGreaterThan(0);
  });

  it("sends coefficient deltas so the server accumulates the slider value", async () => {
    const { fetch, served } = fakeService();
    const api = new ApiClient(fetch);
    const stack = new EditStackController(api, "sess", () => undefined, 100);

    stack.setScale("smile", 1.0);
    await vi.advanceTimersByTimeAsync(150);
    stack.setScale("smile", 0.25);
    await vi.advanceTimersByTimeAsync(150);

    const scales = served.map((r) => (r.body as any).scale);
    expect(scales[0]).toBeCloseTo(1.0);
    expect(scales[1]).toBeCloseTo(-0.75);
    expect(stack.appliedScale("smile")).toBeCloseTo(0.25);
  });

  it("stacks multiple vectors independently", async () => {
    const { fetch, served } = fakeService();
    const api = new ApiClient(fetch);
    const stack = new EditStackController(api, "sess", () => undefined, 50);

    stack.setScale("smile", 0.5);
    stack.setScale("wheels", -1.0);
    await vi.advanceTimersByTimeAsync(200);

    const byVector = new Map(served.map((r) => [(r.body as any).vector,
                                                (r.body as any).scale]));
    expect(byVector.get("smile")).toBeCloseTo(0.5);
    expect(byVector.get("wheels")).toBeCloseTo(-1.0);
  });

  it("unchanged slider values produce no traffic", async () => {
    const { fetch, served } = fakeService();
    const api = new ApiClient(fetch);
    const stack = new EditStackController(api, "sess", () => undefined, 50);

    stack.setScale("smile", 0.8);
    await vi.advanceTimersByTimeAsync(100);
    const after = served.length;
    stack.setScale("smile", 0.8); // same value again
    await vi.advanceTimersByTimeAsync(100);
    expect(served.length).toBe(after);
  });
});
