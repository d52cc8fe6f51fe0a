import { describe, expect, it } from "vitest";

import { escapeHtml, parseMarkdownTable, renderOcrMarkdown } from "../src/markdown.js";

describe("parseMarkdownTable", () => {
  it("parses a well-formed table with separator", () => {
    const parsed = parseMarkdownTable(
      "| Item | Count |\n| --- | --- |\n| widget | 42 |\n| gadget | 7 |",
    );
    expect(parsed).not.toBeNull();
    expect(parsed!.header).toEqual(["Item", "Count"]);
    expect(parsed!.rows).toEqual([
      ["widget", "42"],
      ["gadget", "7"],
    ]);
  });

  it("pads ragged rows to the widest row", () => {
    const parsed = parseMarkdownTable("| a | b | c |\n| --- | --- | --- |\n| only-one |\n| x | y |");
    expect(parsed!.header).toEqual(["a", "b", "c"]);
    expect(parsed!.rows).toEqual([
      ["only-one", "", ""],
      ["x", "y", ""],
    ]);
  });

  it("pads the header when a data row is wider", () => {
    const parsed = parseMarkdownTable("| a |\n| --- |\n| x | y | z |");
    expect(parsed!.header).toEqual(["a", "", ""]);
    expect(parsed!.rows[0]).toEqual(["x", "y", "z"]);
  });

  it("tolerates a missing separator line", () => {
    const parsed = parseMarkdownTable("| h1 | h2 |\n| v1 | v2 |");
    expect(parsed!.header).toEqual(["h1", "h2"]);
    expect(parsed!.rows).toEqual([["v1", "v2"]]);
  });

  it("returns null for prose with no table", () => {
    expect(parseMarkdownTable("just a sentence")).toBeNull();
    expect(parseMarkdownTable("")).toBeNull();
  });
});

describe("renderOcrMarkdown", () => {
  it("renders an HTML table", () => {
    const html = renderOcrMarkdown("| Warranty reserve | 11,832 |\n| --- | --- |\n| 2009 | 10,102 |");
    expect(html).toContain("<table");
    expect(html).toContain("<th>Warranty reserve</th>");
    expect(html).toContain("<td>10,102</td>");
  });

  it("escapes model-provided content", () => {
    const html = renderOcrMarkdown("| <script>alert(1)</script> | x |\n| --- | --- |\n| a | b |");
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });

  it("falls back to pre for unstructured text", () => {
    const html = renderOcrMarkdown("no table here");
    expect(html).toBe("<pre>no table here</pre>");
  });
});

describe("escapeHtml", () => {
  it("escapes the four risky characters", () => {
    expect(escapeHtml('<a href="x">&</a>')).toBe("&lt;a href=&quot;x&quot;&gt;&amp;&lt;/a&gt;");
  });
});
