use std::collections::BTreeMap;
use std::sync::OnceLock;

/// Side of the authoring grid the embedded glyph coordinates live on.
pub(crate) const GRID: f64 = 10.0;

/// Polylines per character, coordinates in the unit box (y down).
#[derive(Clone, Debug)]
pub struct GlyphSet {
    glyphs: BTreeMap<char, Vec<Vec<[f64; 2]>>>,
}

impl GlyphSet {
    /// The built-in stroke alphabet: `A–Z`, `a–z` and `0–9`.
    pub fn embedded() -> &'static GlyphSet {
        static SET: OnceLock<GlyphSet> = OnceLock::new();
        SET.get_or_init(|| GlyphSet::parse(include_str!("glyphs.txt")).expect("embedded glyph table parses"))
    }

    pub(crate) fn parse(text: &str) -> Result<GlyphSet, String> {
        let mut glyphs = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut chars = line.chars();
            let c = chars.next().expect("non-empty line");
            let mut strokes = Vec::new();
            for part in chars.as_str().split('|') {
                let stroke = part
                    .split_whitespace()
                    .map(|pair| {
                        let (x, y) = pair.split_once(',').ok_or(format!("line {}: bad point {pair:?}", n + 1))?;
                        let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1));
                        let (x, y) = (parse(x)? / GRID, parse(y)? / GRID);
                        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                            return Err(format!("line {}: point {pair} leaves the unit box", n + 1));
                        }
                        Ok([x, y])
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                if stroke.is_empty() {
                    return Err(format!("line {}: empty stroke", n + 1));
                }
                strokes.push(stroke);
            }
            if glyphs.insert(c, strokes).is_some() {
                return Err(format!("line {}: duplicate glyph {c:?}", n + 1));
            }
        }
        Ok(GlyphSet { glyphs })
    }

    pub fn get(&self, c: char) -> Option<&[Vec<[f64; 2]>]> {
        self.glyphs.get(&c).map(Vec::as_slice)
    }

    pub fn contains(&self, c: char) -> bool {
        self.glyphs.contains_key(&c)
    }

    /// Supported characters in code-point order.
    pub fn alphabet(&self) -> String {
        self.glyphs.keys().collect()
    }
}
