/** Locate argument spans inside an evidence sentence for highlighting.
 *
 * Arguments are matched case-insensitively on their first occurrence.
 * Coreference-resolved arguments often do not appear verbatim in the
 * sentence (the text said "The drug", the KB says "Ivermectin"); those
 * simply produce no highlight segment.
 */

export type SpanRole = "e1" | "e2";

export interface Segment {
  text: string;
  role: SpanRole | null;
}

interface Hit {
  start: number;
  end: number;
  role: SpanRole;
}

export function segmentSentence(
  sentence: string,
  arg1: string,
  arg2: string,
): Segment[] {
  const lower = sentence.toLowerCase();
  const hits: Hit[] = [];
  const spans: Array<[string, SpanRole]> = [
    [arg1, "e1"],
    [arg2, "e2"],
  ];
  for (const [arg, role] of spans) {
    const needle = arg.trim().toLowerCase();
    if (needle === "") continue;
    let from = 0;
    while (from <= lower.length) {
      const start = lower.indexOf(needle, from);
      if (start === -1) break;
      const end = start + needle.length;
      if (hits.every((h) => end <= h.start || start >= h.end)) {
        hits.push({ start, end, role });
        break; // first non-overlapping occurrence only
      }
      from = start + 1;
    }
  }
  hits.sort((a, b) => a.start - b.start);

  const segments: Segment[] = [];
  let cursor = 0;
  for (const hit of hits) {
    if (hit.start > cursor) {
      segments.push({ text: sentence.slice(cursor, hit.start), role: null });
    }
    segments.push({ text: sentence.slice(hit.start, hit.end), role: hit.role });
    cursor = hit.end;
  }
  if (cursor < sentence.length) {
    segments.push({ text: sentence.slice(cursor), role: null });
  }
  return segments;
}
