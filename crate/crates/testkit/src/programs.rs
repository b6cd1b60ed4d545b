//! Random functions in the supported C subset.
//!
//! Every declared variable gets a fresh name, so name lookup alone resolves
//! occurrences. Returns only end blocks, which keeps every statement
//! reachable from the entry.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgramConfig {
    /// Upper bound on statements, compound ones included.
    pub max_statements: usize,
    pub loops: bool,
    pub max_nesting: usize,
}

impl ProgramConfig {
    pub fn loop_free(max_statements: usize) -> Self {
        ProgramConfig { max_statements, loops: false, max_nesting: 3 }
    }

    pub fn with_loops(max_statements: usize) -> Self {
        ProgramConfig { max_statements, loops: true, max_nesting: 3 }
    }
}

const CALLEES: &[&str] = &["log", "sink", "check"];
const TYPES: &[&str] = &["int", "short"];
const ARITH: &[&str] = &["+", "-", "*", "/", "%"];
const COMPARE: &[&str] = &["<", ">", "<=", ">=", "==", "!="];

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    cfg: ProgramConfig,
    budget: usize,
    scopes: Vec<Vec<String>>,
    next_var: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn visible(&self) -> Vec<String> {
        self.scopes.iter().flatten().cloned().collect()
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.next_var += 1;
        format!("{prefix}{}", self.next_var)
    }

    fn pick<'a>(&mut self, items: &'a [&'a str]) -> &'a str {
        items[self.rng.gen_range(0..items.len())]
    }

    fn expr(&mut self, depth: usize) -> String {
        let vars = self.visible();
        let choice = if depth == 0 { self.rng.gen_range(0..2) } else { self.rng.gen_range(0..6) };
        match choice {
            0 if !vars.is_empty() => vars[self.rng.gen_range(0..vars.len())].clone(),
            0 | 1 => self.rng.gen_range(0..100).to_string(),
            2 | 3 => {
                let op = self.pick(ARITH);
                format!("{} {op} {}", self.expr(depth - 1), self.expr(depth - 1))
            }
            4 => format!("-({})", self.expr(depth - 1)),
            _ => {
                let callee = self.pick(CALLEES);
                format!("{callee}({})", self.expr(depth - 1))
            }
        }
    }

    fn condition(&mut self) -> String {
        let op = self.pick(COMPARE);
        format!("{} {op} {}", self.expr(1), self.expr(1))
    }

    /// Statements of a block, and whether it always returns.
    fn block(&mut self, nesting: usize, indent: usize) -> (String, bool) {
        self.scopes.push(Vec::new());
        let mut out = String::new();
        let mut returns = false;
        let pad = " ".repeat(indent * 4);
        let length = self.rng.gen_range(0..=4);
        for _ in 0..length {
            if self.budget == 0 {
                break;
            }
            let (text, always) = self.statement(nesting, indent);
            out.push_str(&pad);
            out.push_str(&text);
            out.push('\n');
            if always {
                returns = true;
                break;
            }
        }
        self.scopes.pop();
        (out, returns)
    }

    fn braced(&mut self, nesting: usize, indent: usize) -> (String, bool) {
        let (body, returns) = self.block(nesting + 1, indent + 1);
        (format!("{{\n{body}{}}}", " ".repeat(indent * 4)), returns)
    }

    fn statement(&mut self, nesting: usize, indent: usize) -> (String, bool) {
        self.budget -= 1;
        let compound_ok = nesting < self.cfg.max_nesting && self.budget > 0;
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=19 => {
                let ty = self.pick(TYPES);
                let name = self.fresh("v");
                let text = if self.rng.gen_bool(0.8) {
                    format!("{ty} {name} = {};", self.expr(2))
                } else {
                    format!("{ty} {name};")
                };
                self.scopes.last_mut().expect("scope").push(name);
                (text, false)
            }
            20..=49 if !self.visible().is_empty() => {
                let vars = self.visible();
                let target = vars[self.rng.gen_range(0..vars.len())].clone();
                (format!("{target} = {};", self.expr(2)), false)
            }
            50..=59 => {
                let callee = self.pick(CALLEES);
                let args: Vec<String> = (0..self.rng.gen_range(0..=2)).map(|_| self.expr(1)).collect();
                (format!("{callee}({});", args.join(", ")), false)
            }
            60..=79 if compound_ok => {
                let cond = self.condition();
                let (then, t_ret) = self.braced(nesting, indent);
                if self.rng.gen_bool(0.5) {
                    let (other, e_ret) = self.braced(nesting, indent);
                    (format!("if ({cond}) {then} else {other}"), t_ret && e_ret)
                } else {
                    (format!("if ({cond}) {then}"), false)
                }
            }
            80..=87 if compound_ok && self.cfg.loops => {
                let cond = self.condition();
                let (body, _) = self.braced(nesting, indent);
                (format!("while ({cond}) {body}"), false)
            }
            88..=93 if compound_ok && self.cfg.loops => {
                let i = self.fresh("i");
                let bound = self.expr(1);
                self.scopes.push(vec![i.clone()]);
                let (body, returns) = self.braced(nesting, indent);
                self.scopes.pop();
                // A step after a body that always returns would be dead code.
                let step = if returns { String::new() } else { format!("{i} = {i} + 1") };
                (format!("for (int {i} = 0; {i} < {bound}; {step}) {body}"), false)
            }
            94..=99 if nesting > 0 => (format!("return {};", self.expr(1)), true),
            _ => {
                let callee = self.pick(CALLEES);
                (format!("{callee}({});", self.expr(1)), false)
            }
        }
    }
}

/// One random function definition.
pub fn random_function(rng: &mut impl Rng, cfg: ProgramConfig) -> String {
    let mut g = Gen { rng, cfg, budget: cfg.max_statements, scopes: vec![Vec::new()], next_var: 0 };
    let params: Vec<String> = (0..g.rng.gen_range(0..=3)).map(|i| format!("p{i}")).collect();
    let decls: Vec<String> = params
        .iter()
        .map(|p| {
            let ty = g.pick(TYPES);
            format!("{ty} {p}")
        })
        .collect();
    g.scopes[0].extend(params);
    let ret = g.pick(TYPES);
    let (body, returns) = g.block(0, 1);
    let tail = if returns || g.rng.gen_bool(0.3) { String::new() } else { format!("    return {};\n", g.expr(1)) };
    format!("{ret} f({}) {{\n{body}{tail}}}\n", decls.join(", "))
}
