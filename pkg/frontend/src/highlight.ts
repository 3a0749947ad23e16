// Dictionary-hit highlighting. The service reports which dictionary tokens
// matched an item; the client only decides where to draw the marks, using
// the same token rule as the server (lowercase alphanumeric runs).

export interface Segment {
  text: string;
  hit: boolean;
  dictionaries: string[];
}

const TOKEN_RE = /[a-z0-9]+/gi;

export function highlightSegments(
  text: string,
  hits: Record<string, string[]>,
): Segment[] {
  const byToken = new Map<string, string[]>();
  for (const [dictionary, tokens] of Object.entries(hits)) {
    for (const token of tokens) {
      const key = token.toLowerCase();
      const dicts = byToken.get(key) ?? [];
      dicts.push(dictionary);
      byToken.set(key, dicts);
    }
  }
  const segments: Segment[] = [];
  let cursor = 0;
  for (const match of text.matchAll(TOKEN_RE)) {
    const start = match.index ?? 0;
    const token = match[0];
    const dicts = byToken.get(token.toLowerCase());
    if (!dicts) continue;
    if (start > cursor) {
      segments.push({ text: text.slice(cursor, start), hit: false, dictionaries: [] });
    }
    segments.push({ text: token, hit: true, dictionaries: [...dicts].sort() });
    cursor = start + token.length;
  }
  if (cursor < text.length) {
    segments.push({ text: text.slice(cursor), hit: false, dictionaries: [] });
  }
  return segments;
}

export function reassemble(segments: Segment[]): string {
  return segments.map((s) => s.text).join("");
}
