use std::fs;
use std::io::Write;
use std::path::Path;

use photodyn_core::closed_loop::SuiteReport;
use serde_json::Value;

use crate::exit::{CliError, CliResult};
use crate::io::write_with;

pub const FITS: &str = "fits.csv";
pub const CHECKS: &str = "checks.csv";

/// Every fit parameter found in a JSON document: (path, name, value, error, unit).
fn collect_params(v: &Value, path: &str, out: &mut Vec<(String, String, String, String, String)>) {
    let num = |v: Option<&Value>| v.and_then(Value::as_f64).map_or("nan".to_string(), |x| format!("{x}"));
    match v {
        Value::Object(map) => {
            if let Some(Value::Object(params)) = map.get("params") {
                for (name, p) in params {
                    if p.get("value").is_some() {
                        let unit = p.get("unit").and_then(Value::as_str).unwrap_or("");
                        out.push((path.into(), name.clone(), num(p.get("value")), num(p.get("error")), unit.into()));
                    }
                }
            }
            for (k, child) in map {
                if k != "params" {
                    collect_params(child, &join(path, k), out);
                }
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                collect_params(child, &join(path, &i.to_string()), out);
            }
        }
        _ => {}
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.into()
    } else {
        format!("{path}.{key}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// JSON files of `dir` and its immediate subdirectories, sorted.
fn json_files(dir: &Path) -> CliResult<Vec<std::path::PathBuf>> {
    let list = |d: &Path| -> CliResult<Vec<std::path::PathBuf>> {
        let mut v: Vec<_> = fs::read_dir(d)
            .map_err(|e| CliError::Io(format!("cannot list {}: {e}", d.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        v.sort();
        Ok(v)
    };
    let mut out = Vec::new();
    for p in list(dir)? {
        if p.is_dir() {
            out.extend(list(&p)?.into_iter().filter(|q| q.extension().is_some_and(|e| e == "json")));
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(out)
}

/// Flattens the fit results and closed-loop checks under `dir` into
/// `fits.csv` and `checks.csv`. Returns the files written.
pub fn report(dir: &Path) -> CliResult<Vec<String>> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    let mut params = Vec::new();
    let mut checks = Vec::new();
    for path in json_files(dir)? {
        let rel = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
        let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let Ok(value) = serde_json::from_str::<Value>(&text) else {
            continue;
        };
        if let Ok(rep) = serde_json::from_value::<SuiteReport>(value.clone()) {
            checks.extend(rep.checks.into_iter().map(|c| (rep.suite.clone(), c)));
        }
        let mut found = Vec::new();
        collect_params(&value, "", &mut found);
        params.extend(found.into_iter().map(|p| (rel.clone(), p)));
    }
    write_with(dir, FITS, |w| {
        writeln!(w, "file,path,parameter,value,error,unit")?;
        for (file, (path, name, value, error, unit)) in &params {
            let row = [file.as_str(), path, name, value, error, unit].map(csv_field);
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    let mut written = vec![FITS.to_string()];
    if !checks.is_empty() {
        write_with(dir, CHECKS, |w| {
            writeln!(w, "suite,criterion,quantity,truth,estimate,tolerance,pass")?;
            for (suite, c) in &checks {
                let tol = serde_json::to_string(&c.tolerance).map_err(std::io::Error::from)?;
                let row = [
                    suite.clone(),
                    c.criterion.clone(),
                    c.quantity.clone(),
                    format!("{}", c.truth),
                    format!("{}", c.estimate),
                    tol,
                    c.pass.to_string(),
                ]
                .map(|s| csv_field(&s));
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        })?;
        written.push(CHECKS.into());
    }
    Ok(written)
}
