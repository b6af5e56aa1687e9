//! Pretty-printer emitting the input DSL, plus the structured JSON emitter.

use super::{Expr, Rat};
use num_traits::{One, Signed};
use serde_json::{json, Value};

fn is_call_like(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Param(_)
            | Expr::Indep(_)
            | Expr::Dep(_)
            | Expr::Jet(_)
            | Expr::Unknown(_)
            | Expr::PDeriv(_)
            | Expr::Elem(..)
    )
}

fn rat_str(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn pow_str(base: &Expr, exp: &Rat) -> String {
    let b = if is_call_like(base) {
        to_dsl(base)
    } else {
        format!("({})", to_dsl(base))
    };
    if exp.is_integer() && !exp.is_negative() {
        format!("{}^{}", b, exp.numer())
    } else {
        format!("{}^({})", b, rat_str(exp))
    }
}

/// Render one product term as `coeff * num / den`, splitting negative-exponent
/// factors into the denominator. The sign is handled by the caller.
fn term_str(coeff: &Rat, factors: &[Expr]) -> String {
    let mut num: Vec<String> = Vec::new();
    let mut den: Vec<String> = Vec::new();
    for f in factors {
        match f {
            Expr::Pow(b, q) if q.is_negative() => {
                let qpos = -q.clone();
                if qpos.is_one() {
                    den.push(if is_call_like(b) {
                        to_dsl(b)
                    } else {
                        format!("({})", to_dsl(b))
                    });
                } else {
                    den.push(pow_str(b, &qpos));
                }
            }
            Expr::Pow(b, q) => num.push(pow_str(b, q)),
            other if is_call_like(other) => num.push(to_dsl(other)),
            other => num.push(format!("({})", to_dsl(other))),
        }
    }
    let cnum = coeff.numer().magnitude();
    let cden = coeff.denom();
    if !cnum.is_one() || num.is_empty() {
        num.insert(0, cnum.to_string());
    }
    if !cden.is_one() {
        den.push(cden.to_string());
    }
    let n = num.join("*");
    if den.is_empty() {
        n
    } else {
        // successive divisions keep each denominator factor a separate atom
        // on reparse; merging them into one parenthesized product would
        // re-expand to a structurally different (unfactored) denominator
        let mut out = n;
        for d in den {
            out.push('/');
            out.push_str(&d);
        }
        out
    }
}

/// Coefficient and remaining factors of a canonical term.
fn split_term(e: &Expr) -> (Rat, Vec<Expr>) {
    match e {
        Expr::Rat(c) => (c.clone(), Vec::new()),
        Expr::Prod(fs) => {
            if let Some(Expr::Rat(c)) = fs.first() {
                (c.clone(), fs[1..].to_vec())
            } else {
                (Rat::one(), fs.clone())
            }
        }
        other => (Rat::one(), vec![other.clone()]),
    }
}

/// Emit the expression in input-DSL syntax; `parse_expr` inverts this on
/// canonical forms.
pub fn to_dsl(e: &Expr) -> String {
    match e {
        Expr::Rat(r) => {
            if r.is_negative() {
                format!("-{}", term_str(&-r.clone(), &[]))
            } else {
                term_str(r, &[])
            }
        }
        Expr::Param(n) | Expr::Indep(n) | Expr::Dep(n) => n.clone(),
        Expr::Jet(j) => format!("diff({},{})", j.dep, j.idx.join(",")),
        Expr::Unknown(u) => {
            if u.args.is_empty() {
                u.name.clone()
            } else {
                format!("{}({})", u.name, u.args.join(","))
            }
        }
        Expr::PDeriv(p) => {
            let head = if p.args.is_empty() {
                p.name.clone()
            } else {
                format!("{}({})", p.name, p.args.join(","))
            };
            format!("diff({},{})", head, p.idx.join(","))
        }
        Expr::Elem(tag, a) => format!("{}({})", tag.name(), to_dsl(a)),
        Expr::Pow(_, _) | Expr::Prod(_) => {
            let (c, fs) = split_term(e);
            let body = term_str(&c, &fs);
            if c.is_negative() {
                format!("-{}", term_str(&-c, &fs))
            } else {
                body
            }
        }
        Expr::Sum(ts) => {
            let mut out = String::new();
            for (i, t) in ts.iter().enumerate() {
                let (c, fs) = split_term(t);
                if c.is_negative() {
                    out.push_str(if i == 0 { "-" } else { " - " });
                    out.push_str(&term_str(&-c, &fs));
                } else {
                    if i > 0 {
                        out.push_str(" + ");
                    }
                    out.push_str(&term_str(&c, &fs));
                }
            }
            out
        }
    }
}

/// Serialize a canonical tree as nested arrays: node kind tag plus children.
pub fn to_json(e: &Expr) -> Value {
    match e {
        Expr::Rat(r) => json!(["rat", rat_str(r)]),
        Expr::Param(n) => json!(["param", n]),
        Expr::Indep(n) => json!(["indep", n]),
        Expr::Dep(n) => json!(["dep", n]),
        Expr::Jet(j) => json!(["jet", j.dep, j.idx]),
        Expr::Unknown(u) => json!(["unk", u.name, u.args]),
        Expr::PDeriv(p) => json!(["pderiv", p.name, p.args, p.idx]),
        Expr::Elem(tag, a) => json!(["elem", tag.name(), to_json(a)]),
        Expr::Pow(b, q) => json!(["pow", to_json(b), rat_str(q)]),
        Expr::Prod(fs) => {
            let mut v = vec![json!("prod")];
            v.extend(fs.iter().map(to_json));
            Value::Array(v)
        }
        Expr::Sum(ts) => {
            let mut v = vec![json!("sum")];
            v.extend(ts.iter().map(to_json));
            Value::Array(v)
        }
    }
}
