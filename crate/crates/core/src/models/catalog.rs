//! Catalog names such as `sphere_circle(N=2,q=1)` or
//! `reduction_universal(k=2,N=1,mu=[1,sqrt(2)])`.

use std::collections::BTreeMap;

use super::{
    model_reduction_universal, model_sphere_circle, model_sphere_circle_lattice, LcsStructure, ModelError,
};
use crate::symexpr::parse;

/// A parsed catalog reference.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogRef {
    pub model: String,
    pub scalars: BTreeMap<String, f64>,
    pub lists: BTreeMap<String, Vec<f64>>,
}

impl CatalogRef {
    fn int(&self, key: &str) -> Result<usize, ModelError> {
        let v = *self
            .scalars
            .get(key)
            .ok_or_else(|| ModelError::BadParameter(format!("{}: missing `{key}`", self.model)))?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(ModelError::BadParameter(format!("{}: `{key}` must be a non-negative integer", self.model)));
        }
        Ok(v as usize)
    }

    fn real(&self, key: &str, default: f64) -> f64 {
        self.scalars.get(key).copied().unwrap_or(default)
    }

    pub fn build(&self) -> Result<LcsStructure, ModelError> {
        match self.model.as_str() {
            "sphere_circle" => model_sphere_circle(self.int("N")?, self.real("q", 1.0)),
            "sphere_circle_lattice" => model_sphere_circle_lattice(self.int("N")?, self.real("q", 1.0)),
            "reduction_universal" => {
                let mu = self.lists.get("mu").cloned().unwrap_or_default();
                let k = match self.scalars.get("k") {
                    Some(_) => self.int("k")?,
                    None => mu.len(),
                };
                model_reduction_universal(k, self.int("N")?, &mu)
            }
            other => Err(ModelError::UnknownModel(other.to_string())),
        }
    }
}

fn constant(src: &str) -> Result<f64, ModelError> {
    let e = parse(src.trim()).map_err(|e| ModelError::BadParameter(format!("`{src}`: {e}")))?;
    e.as_const()
        .ok_or_else(|| ModelError::BadParameter(format!("`{src}` is not a constant")))
}

/// Splits on commas that are not nested in brackets or parentheses.
fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out.into_iter().filter(|p| !p.trim().is_empty()).collect()
}

pub fn parse_catalog_ref(src: &str) -> Result<CatalogRef, ModelError> {
    let src = src.trim();
    let (model, args) = match src.find('(') {
        Some(i) if src.ends_with(')') => (&src[..i], &src[i + 1..src.len() - 1]),
        None => (src, ""),
        _ => return Err(ModelError::BadParameter(format!("malformed catalog reference `{src}`"))),
    };
    let mut r = CatalogRef {
        model: model.trim().to_string(),
        scalars: BTreeMap::new(),
        lists: BTreeMap::new(),
    };
    for part in split_top(args) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| ModelError::BadParameter(format!("expected key=value, got `{part}`")))?;
        let (key, value) = (key.trim().to_string(), value.trim());
        if let Some(inner) = value.strip_prefix('[').and_then(|v| v.strip_suffix(']')) {
            let list = split_top(inner).into_iter().map(constant).collect::<Result<_, _>>()?;
            r.lists.insert(key, list);
        } else {
            r.scalars.insert(key, constant(value)?);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scalars_and_lists() {
        let r = parse_catalog_ref("reduction_universal(k=2, N=1, mu=[1, sqrt(2)])").unwrap();
        assert_eq!(r.model, "reduction_universal");
        assert_eq!(r.scalars["k"], 2.0);
        assert_eq!(r.lists["mu"], vec![1.0, 2f64.sqrt()]);
    }

    #[test]
    fn builds_named_models() {
        let s = parse_catalog_ref("sphere_circle(N=2,q=1)").unwrap().build().unwrap();
        assert_eq!(s.charts.len(), 9);
        let u = parse_catalog_ref("reduction_universal(N=1,mu=[1])").unwrap().build().unwrap();
        assert_eq!(u.charts[0].domain.dim(), 6);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            parse_catalog_ref("hopf(N=2)").unwrap().build(),
            Err(ModelError::UnknownModel(_))
        ));
        assert!(parse_catalog_ref("sphere_circle(N=2").is_err());
        assert!(parse_catalog_ref("sphere_circle(N=x)").is_err());
        assert!(parse_catalog_ref("sphere_circle(N=2.5)").unwrap().build().is_err());
    }
}
