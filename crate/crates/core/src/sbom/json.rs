//! SPDX 2.3 / CycloneDX 1.x JSON ingestion and export.
//!
//! The mapping is format-agnostic:
//!
//! * scalar `"k": v` becomes field `k` (non-string scalars keep their JSON
//!   literal as value and get a `#json` name suffix);
//! * arrays of scalars become one field per element named `k[i]`, an empty
//!   array becomes the field `k[]`;
//! * each object in an array `k` becomes a complex node whose type is the
//!   singular of `k` (`packages` → `package`), or `k[]` if no singular is known;
//! * a nested object `k` becomes a complex node of type `k` (`k{}` when `k`
//!   collides with a singular item type).
//!
//! Document-level objects (e.g. `creationInfo`) are flattened into fields of
//! the root SBOM node using `/` as the path separator.

use serde_json::{Map, Value};

use crate::purl::Purl;

use super::{
    parse_native, ComplexNode, FieldNode, Node, SbomError, SbomNode, SbomTree, SourceFormat,
};

const JSON_SUFFIX: &str = "#json";
const EMBEDDED_KEY: &str = "x-petra-embedded";
const EXTENSIONS_KEY: &str = "extensions";

const ITEM_TYPES: &[(&str, &str)] = &[
    ("packages", "package"),
    ("files", "file"),
    ("relationships", "relationship"),
    ("snippets", "snippet"),
    ("annotations", "annotation"),
    ("checksums", "checksum"),
    ("externalRefs", "externalRef"),
    ("externalDocumentRefs", "externalDocumentRef"),
    ("hasExtractedLicensingInfos", "extractedLicensingInfo"),
    ("ranges", "range"),
    ("components", "component"),
    ("services", "service"),
    ("dependencies", "dependency"),
    ("vulnerabilities", "vulnerability"),
    ("licenses", "license"),
    ("hashes", "hash"),
    ("externalReferences", "externalReference"),
    ("properties", "property"),
    ("authors", "author"),
    ("ratings", "rating"),
    ("advisories", "advisory"),
    ("affects", "affect"),
    ("compositions", "composition"),
];

const SPDX_ROOT_KEYS: &[&str] = &[
    "spdxVersion",
    "dataLicense",
    "SPDXID",
    "name",
    "documentNamespace",
    "externalDocumentRefs",
    "comment",
    "creationInfo",
    "packages",
    "files",
    "snippets",
    "relationships",
    "annotations",
    "hasExtractedLicensingInfos",
    "documentDescribes",
];

const CDX_ROOT_KEYS: &[&str] = &[
    "$schema",
    "bomFormat",
    "specVersion",
    "serialNumber",
    "version",
    "metadata",
    "components",
    "services",
    "externalReferences",
    "dependencies",
    "compositions",
    "properties",
    "vulnerabilities",
    "annotations",
    "formulation",
    "declarations",
    "definitions",
    "signature",
];

fn item_type(key: &str) -> String {
    ITEM_TYPES
        .iter()
        .find(|(plural, _)| *plural == key)
        .map(|(_, single)| (*single).to_owned())
        .unwrap_or_else(|| format!("{key}[]"))
}

fn array_key_of_item(element_type: &str) -> Option<String> {
    if let Some(k) = element_type.strip_suffix("[]") {
        return Some(k.to_owned());
    }
    ITEM_TYPES
        .iter()
        .find(|(_, single)| *single == element_type)
        .map(|(plural, _)| (*plural).to_owned())
}

fn object_type(key: &str) -> String {
    let collides = ITEM_TYPES.iter().any(|(_, s)| *s == key)
        || key.ends_with("[]")
        || key.ends_with("{}");
    if collides {
        format!("{key}{{}}")
    } else {
        key.to_owned()
    }
}

fn object_key_of_type(element_type: &str) -> &str {
    element_type.strip_suffix("{}").unwrap_or(element_type)
}

fn malformed(msg: impl Into<String>) -> SbomError {
    SbomError::MalformedDocument(msg.into())
}

fn scalar_field(name: String, v: &Value) -> Node {
    match v {
        Value::String(s) => Node::Field(FieldNode { name, value: s.clone() }),
        other => Node::Field(FieldNode {
            name: format!("{name}{JSON_SUFFIX}"),
            value: other.to_string(),
        }),
    }
}

/// Parses an SBOM document into a tree.
pub fn parse_sbom(document: &[u8], format: SourceFormat) -> Result<SbomTree, SbomError> {
    if format == SourceFormat::Native {
        return parse_native(document);
    }
    let value: Value =
        serde_json::from_slice(document).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let doc = value
        .as_object()
        .ok_or_else(|| malformed("top-level value is not an object"))?;
    let index = match format {
        SourceFormat::Spdx => {
            check_spdx(doc)?;
            spdx_index(doc)?
        }
        SourceFormat::CycloneDx => {
            check_cyclonedx(doc)?;
            cyclonedx_index(doc)?
        }
        SourceFormat::Native => unreachable!(),
    };
    let mut children = Vec::new();
    for (k, v) in doc {
        map_root_entry(k, v, &mut children)?;
    }
    Ok(SbomTree {
        root: SbomNode { index, doc_meta: format.doc_meta(), children },
        source_format: format,
    })
}

fn check_spdx(doc: &Map<String, Value>) -> Result<(), SbomError> {
    match doc.get("spdxVersion").and_then(Value::as_str) {
        Some(v) if v.starts_with("SPDX-2.") => Ok(()),
        Some(v) => Err(SbomError::UnsupportedFormat(format!("SPDX version {v}"))),
        None => Err(malformed("missing spdxVersion")),
    }
}

fn check_cyclonedx(doc: &Map<String, Value>) -> Result<(), SbomError> {
    if doc.get("bomFormat").and_then(Value::as_str) != Some("CycloneDX") {
        return Err(malformed("bomFormat is not CycloneDX"));
    }
    let spec = doc
        .get("specVersion")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing specVersion"))?;
    let minor = spec
        .strip_prefix("1.")
        .and_then(|m| m.parse::<u32>().ok())
        .ok_or_else(|| SbomError::UnsupportedFormat(format!("CycloneDX {spec}")))?;
    if minor < 4 {
        return Err(SbomError::UnsupportedFormat(format!("CycloneDX {spec}")));
    }
    Ok(())
}

fn spdx_index(doc: &Map<String, Value>) -> Result<Purl, SbomError> {
    let packages = doc.get("packages").and_then(Value::as_array);
    let described = doc
        .get("documentDescribes")
        .and_then(Value::as_array)
        .and_then(|a| a.first())
        .and_then(Value::as_str)
        .or_else(|| {
            doc.get("relationships")?.as_array()?.iter().find_map(|r| {
                (r.get("spdxElementId")?.as_str()? == "SPDXRef-DOCUMENT"
                    && r.get("relationshipType")?.as_str()? == "DESCRIBES")
                    .then(|| r.get("relatedSpdxElement")?.as_str())
                    .flatten()
            })
        });
    let package = described.and_then(|id| {
        packages?
            .iter()
            .find(|p| p.get("SPDXID").and_then(Value::as_str) == Some(id))
    });
    if let Some(p) = package {
        let purl = p
            .get("externalRefs")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter(|r| r.get("referenceType").and_then(Value::as_str) == Some("purl"))
            .find_map(|r| Purl::parse(r.get("referenceLocator")?.as_str()?).ok());
        if let Some(purl) = purl {
            return Ok(purl);
        }
    }
    let name = doc
        .get("documentNamespace")
        .and_then(Value::as_str)
        .or_else(|| doc.get("name").and_then(Value::as_str))
        .filter(|s| !s.is_empty())
        .ok_or(SbomError::MissingIndex)?;
    let version = package
        .and_then(|p| p.get("versionInfo"))
        .and_then(Value::as_str)
        .unwrap_or("0");
    Ok(Purl::generic(name, version)?)
}

fn cyclonedx_index(doc: &Map<String, Value>) -> Result<Purl, SbomError> {
    let component = doc.get("metadata").and_then(|m| m.get("component"));
    if let Some(purl) = component
        .and_then(|c| c.get("purl"))
        .and_then(Value::as_str)
        .and_then(|p| Purl::parse(p).ok())
    {
        return Ok(purl);
    }
    let name = doc
        .get("serialNumber")
        .and_then(Value::as_str)
        .or_else(|| component?.get("name")?.as_str())
        .filter(|s| !s.is_empty())
        .ok_or(SbomError::MissingIndex)?;
    let version = component
        .and_then(|c| c.get("version"))
        .and_then(Value::as_str)
        .unwrap_or("0");
    Ok(Purl::generic(name, version)?)
}

fn map_root_entry(key: &str, v: &Value, out: &mut Vec<Node>) -> Result<(), SbomError> {
    match v {
        Value::Object(_) => flatten(key.to_owned(), v, out),
        _ => map_entry(key, v, out),
    }
}

/// Flattens a document-level object into `/`-separated field names.
fn flatten(prefix: String, v: &Value, out: &mut Vec<Node>) -> Result<(), SbomError> {
    match v {
        Value::Object(m) if m.is_empty() => {
            out.push(Node::field(format!("{prefix}{{}}"), ""));
        }
        Value::Object(m) => {
            for (k, child) in m {
                flatten(format!("{prefix}/{k}"), child, out)?;
            }
        }
        Value::Array(a) if a.is_empty() => out.push(Node::field(format!("{prefix}[]"), "")),
        Value::Array(a) => {
            for (i, child) in a.iter().enumerate() {
                if child.is_array() {
                    return Err(malformed(format!("nested array under {prefix}")));
                }
                flatten(format!("{prefix}[{i}]"), child, out)?;
            }
        }
        scalar => out.push(scalar_field(prefix, scalar)),
    }
    Ok(())
}

fn map_entry(key: &str, v: &Value, out: &mut Vec<Node>) -> Result<(), SbomError> {
    match v {
        Value::Object(m) => out.push(Node::Complex(ComplexNode {
            element_type: object_type(key),
            children: map_object(m)?,
        })),
        Value::Array(a) if a.is_empty() => out.push(Node::field(format!("{key}[]"), "")),
        Value::Array(a) => {
            for (i, item) in a.iter().enumerate() {
                match item {
                    Value::Object(m) => out.push(Node::Complex(ComplexNode {
                        element_type: item_type(key),
                        children: map_object(m)?,
                    })),
                    Value::Array(_) => return Err(malformed(format!("nested array under {key}"))),
                    scalar => out.push(scalar_field(format!("{key}[{i}]"), scalar)),
                }
            }
        }
        scalar => out.push(scalar_field(key.to_owned(), scalar)),
    }
    Ok(())
}

fn map_object(m: &Map<String, Value>) -> Result<Vec<Node>, SbomError> {
    let mut out = Vec::with_capacity(m.len());
    for (k, v) in m {
        map_entry(k, v, &mut out)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// export

enum Access {
    Key,
    Index(usize),
    EmptyArray,
    EmptyObject,
}

fn split_decoration(seg: &str) -> (&str, Access) {
    if let Some(k) = seg.strip_suffix("[]") {
        return (k, Access::EmptyArray);
    }
    if let Some(k) = seg.strip_suffix("{}") {
        return (k, Access::EmptyObject);
    }
    if let Some(open) = seg.rfind('[') {
        if let Some(digits) = seg[open + 1..].strip_suffix(']') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(i) = digits.parse() {
                    return (&seg[..open], Access::Index(i));
                }
            }
        }
    }
    (seg, Access::Key)
}

/// The field's name with decorations (`#json`, `[i]`, `[]`, `{}`) removed.
/// Strips the `#json` suffix and `[i]`/`[]`/`{}` decorations from a node name.
pub fn base_name(name: &str) -> &str {
    let name = name.strip_suffix(JSON_SUFFIX).unwrap_or(name);
    split_decoration(name).0
}

fn field_value(f: &FieldNode) -> (String, Value) {
    match f.name.strip_suffix(JSON_SUFFIX) {
        Some(name) => {
            let v = serde_json::from_str(&f.value).unwrap_or_else(|_| Value::String(f.value.clone()));
            (name.to_owned(), v)
        }
        None => (f.name.clone(), Value::String(f.value.clone())),
    }
}

fn slot(arr: &mut Vec<Value>, i: usize) -> &mut Value {
    if arr.len() <= i {
        arr.resize(i + 1, Value::Null);
    }
    &mut arr[i]
}

fn insert_path(map: &mut Map<String, Value>, segs: &[&str], leaf: Value) {
    let (key, access) = split_decoration(segs[0]);
    let last = segs.len() == 1;
    match access {
        Access::EmptyArray => {
            map.insert(key.to_owned(), Value::Array(Vec::new()));
        }
        Access::EmptyObject => {
            map.insert(key.to_owned(), Value::Object(Map::new()));
        }
        Access::Key if last => {
            map.insert(key.to_owned(), leaf);
        }
        Access::Key => {
            let entry = map.entry(key.to_owned()).or_insert_with(|| Value::Object(Map::new()));
            if !entry.is_object() {
                *entry = Value::Object(Map::new());
            }
            insert_path(entry.as_object_mut().expect("object"), &segs[1..], leaf);
        }
        Access::Index(i) => {
            let entry = map.entry(key.to_owned()).or_insert_with(|| Value::Array(Vec::new()));
            if !entry.is_array() {
                *entry = Value::Array(Vec::new());
            }
            let item = slot(entry.as_array_mut().expect("array"), i);
            if last {
                *item = leaf;
            } else {
                if !item.is_object() {
                    *item = Value::Object(Map::new());
                }
                insert_path(item.as_object_mut().expect("object"), &segs[1..], leaf);
            }
        }
    }
}

fn push_item(map: &mut Map<String, Value>, key: String, item: Value) {
    let entry = map.entry(key).or_insert_with(|| Value::Array(Vec::new()));
    if !entry.is_array() {
        *entry = Value::Array(Vec::new());
    }
    entry.as_array_mut().expect("array").push(item);
}

fn children_to_map(children: &[Node], root: bool) -> Result<Map<String, Value>, SbomError> {
    let mut map = Map::new();
    for child in children {
        match child {
            Node::Field(f) => {
                let (name, value) = field_value(f);
                if root {
                    let segs: Vec<&str> = name.split('/').collect();
                    insert_path(&mut map, &segs, value);
                } else {
                    insert_path(&mut map, &[name.as_str()], value);
                }
            }
            Node::Complex(c) => {
                let obj = Value::Object(children_to_map(&c.children, false)?);
                match array_key_of_item(&c.element_type) {
                    Some(key) => push_item(&mut map, key, obj),
                    None => {
                        map.insert(object_key_of_type(&c.element_type).to_owned(), obj);
                    }
                }
            }
            Node::Sbom(s) => {
                let format = SourceFormat::from_doc_meta(&s.doc_meta).unwrap_or(SourceFormat::Native);
                let document = Value::Object(children_to_map(&s.children, true)?);
                let mut entry = Map::new();
                entry.insert("index".into(), Value::String(s.index.to_string()));
                entry.insert("format".into(), Value::String(format.as_str().into()));
                entry.insert("document".into(), document);
                push_item(&mut map, EMBEDDED_KEY.to_owned(), Value::Object(entry));
            }
        }
    }
    Ok(map)
}

/// Renders the tree as an SPDX or CycloneDX JSON document.
///
/// Trees parsed from a format export back to that format unchanged; native
/// trees can be exported to either, with root keys the target schema does not
/// define moved under `extensions`.
pub fn export_plaintext(tree: &SbomTree, format: SourceFormat) -> Result<Vec<u8>, SbomError> {
    let known = match format {
        SourceFormat::Spdx => SPDX_ROOT_KEYS,
        SourceFormat::CycloneDx => CDX_ROOT_KEYS,
        SourceFormat::Native => {
            return Err(SbomError::UnsupportedFormat("native trees are not exported as JSON".into()))
        }
    };
    if tree.source_format != format && tree.source_format != SourceFormat::Native {
        return Err(SbomError::UnsupportedFormat(format!(
            "cannot export a {} tree as {}",
            tree.source_format, format
        )));
    }
    let mut map = children_to_map(&tree.root.children, true)?;
    if tree.source_format == SourceFormat::Native {
        let unknown: Vec<String> = map
            .keys()
            .filter(|k| !known.contains(&k.as_str()) && k.as_str() != EMBEDDED_KEY)
            .cloned()
            .collect();
        if !unknown.is_empty() {
            let mut ext = Map::new();
            for k in unknown {
                if let Some(v) = map.shift_remove(&k) {
                    ext.insert(k, v);
                }
            }
            map.insert(EXTENSIONS_KEY.into(), Value::Object(ext));
        }
    }
    Ok(serde_json::to_vec_pretty(&Value::Object(map)).expect("JSON values always serialize"))
}

/// Every `(path, scalar)` pair of a JSON document, with paths like
/// `packages/0/name` and scalars as JSON literals. Sorted, so two documents
/// carry the same data iff their pair lists are equal.
pub fn scalar_pairs(doc: &Value) -> Vec<(String, String)> {
    fn go(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(m) => {
                for (k, c) in m {
                    go(&format!("{prefix}/{k}"), c, out);
                }
            }
            Value::Array(a) => {
                for (i, c) in a.iter().enumerate() {
                    go(&format!("{prefix}/{i}"), c, out);
                }
            }
            s => out.push((prefix.to_owned(), s.to_string())),
        }
    }
    let mut out = Vec::new();
    go("", doc, &mut out);
    out.sort();
    out
}
