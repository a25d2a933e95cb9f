/** Incremental server-sent-events parsing (data-only frames). */

export interface SseEvent {
  data: string;
}

/**
 * Stateful parser: feed it raw text chunks in arrival order, get back the
 * events completed so far. Frames may be split across chunk boundaries.
 */
export class SseParser {
  private buffer = "";

  feed(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const events: SseEvent[] = [];
    for (;;) {
      const boundary = this.buffer.indexOf("\n\n");
      if (boundary < 0) break;
      const frame = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const dataLines = frame.split("\n")
        .filter((line) => line.startsWith("data:"))
        .map((line) => line.slice(5).trimStart());
      if (dataLines.length) {
        events.push({ data: dataLines.join("\n") });
      }
    }
    return events;
  }
}

export interface JobProgress {
  step?: number;
  loss_total?: number;
  loss_rgb?: number;
  loss_ce?: number;
  loss_id?: number;
  status?: string;
  error?: string;
}

/** Consume a streaming response body, invoking onEvent per parsed frame. */
export async function consumeEventStream(
    body: ReadableStream<Uint8Array>,
    onEvent: (event: JobProgress) => void): Promise<void> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
      try {
        onEvent(JSON.parse(event.data));
      } catch {
        // non-JSON frames are ignored
      }
    }
  }
}
