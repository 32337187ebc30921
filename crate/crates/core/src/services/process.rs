//! Declarative process engine.
//!
//! A process definition is a DAG of nodes: one `receive`, any number of
//! `invoke` and `decision` nodes, and at least one `reply`. Invokes that
//! share a `parallel_group` have no data dependencies on each other
//! (validated statically) and run concurrently; the engine joins the whole
//! group before any dependent node. Decisions evaluate a filter-style
//! boolean expression over one variable and steer execution down exactly
//! one branch. The first reply reached produces the process output.
//!
//! Ports connect processes: a port descriptor names the service and
//! operation, types the input/output messages, and binds either to an
//! in-process handler or to an HTTP endpoint.

use crate::dcps::filter::FilterExpression;
use crate::dcps::types::{FieldDef, FieldKind, FieldValue};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("invalid process definition: {0}")]
    Validation(String),
    #[error("port `{0}` is not bound")]
    PortUnbound(String),
    #[error("invoke `{node}` timed out after {timeout_ms} ms")]
    InvokeTimeout { node: String, timeout_ms: u64 },
    #[error("message does not match schema: {0}")]
    SchemaMismatch(String),
    #[error("decision expression error: {0}")]
    Decision(String),
    #[error("invoke `{node}` failed: {message}")]
    InvokeFailed { node: String, message: String },
    #[error("http transport error: {0}")]
    Http(String),
}

/// Flat field list describing one message type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSchema {
    pub fields: Vec<FieldDef>,
}

impl MessageSchema {
    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// A typed message: named field values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Message {
    pub fields: BTreeMap<String, FieldValue>,
}

impl Message {
    pub fn new() -> Self {
        Message::default()
    }

    pub fn with(mut self, name: &str, value: FieldValue) -> Self {
        self.fields.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&FieldValue> {
        self.fields.get(name)
    }

    pub fn get_str(&self, name: &str) -> Option<&str> {
        match self.fields.get(name) {
            Some(FieldValue::Str(s)) => Some(s),
            _ => None,
        }
    }

    pub fn get_bool(&self, name: &str) -> Option<bool> {
        match self.fields.get(name) {
            Some(FieldValue::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    /// Validates against a schema: every declared field present with the
    /// declared kind, no extras.
    pub fn conforms(&self, schema: &MessageSchema) -> Result<(), ProcessError> {
        for field in &schema.fields {
            match self.fields.get(&field.name) {
                Some(value) if value.kind() == field.kind => {}
                Some(value) => {
                    return Err(ProcessError::SchemaMismatch(format!(
                        "field `{}` expects {:?}, got {:?}",
                        field.name,
                        field.kind,
                        value.kind()
                    )))
                }
                None => {
                    return Err(ProcessError::SchemaMismatch(format!(
                        "missing field `{}`",
                        field.name
                    )))
                }
            }
        }
        if let Some(extra) = self
            .fields
            .keys()
            .find(|k| schema.field(k).is_none())
        {
            return Err(ProcessError::SchemaMismatch(format!(
                "unexpected field `{extra}`"
            )));
        }
        Ok(())
    }

    /// Converts a JSON object into a message using the schema's kinds.
    pub fn from_json(
        schema: &MessageSchema,
        value: &serde_json::Value,
    ) -> Result<Message, ProcessError> {
        let object = value
            .as_object()
            .ok_or_else(|| ProcessError::SchemaMismatch("expected a JSON object".to_string()))?;
        let mut message = Message::new();
        for field in &schema.fields {
            let raw = object.get(&field.name).ok_or_else(|| {
                ProcessError::SchemaMismatch(format!("missing field `{}`", field.name))
            })?;
            message
                .fields
                .insert(field.name.clone(), json_to_field(raw, field.kind)?);
        }
        Ok(message)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut object = serde_json::Map::new();
        for (name, value) in &self.fields {
            object.insert(name.clone(), field_to_json(value));
        }
        serde_json::Value::Object(object)
    }
}

fn json_to_field(value: &serde_json::Value, kind: FieldKind) -> Result<FieldValue, ProcessError> {
    let err = || {
        ProcessError::SchemaMismatch(format!(
            "JSON value {value} does not fit field kind {kind:?}"
        ))
    };
    Ok(match kind {
        FieldKind::U32 => FieldValue::U32(value.as_u64().ok_or_else(err)? as u32),
        FieldKind::U64 => FieldValue::U64(value.as_u64().ok_or_else(err)?),
        FieldKind::I64 => FieldValue::I64(value.as_i64().ok_or_else(err)?),
        FieldKind::F32 => FieldValue::F32(value.as_f64().ok_or_else(err)? as f32),
        FieldKind::F64 => FieldValue::F64(value.as_f64().ok_or_else(err)?),
        FieldKind::Bool => FieldValue::Bool(value.as_bool().ok_or_else(err)?),
        FieldKind::String => FieldValue::Str(value.as_str().ok_or_else(err)?.to_string()),
    })
}

fn field_to_json(value: &FieldValue) -> serde_json::Value {
    match value {
        FieldValue::U32(v) => serde_json::json!(v),
        FieldValue::U64(v) => serde_json::json!(v),
        FieldValue::I64(v) => serde_json::json!(v),
        FieldValue::F32(v) => serde_json::json!(v),
        FieldValue::F64(v) => serde_json::json!(v),
        FieldValue::Bool(v) => serde_json::json!(v),
        FieldValue::Str(v) => serde_json::json!(v),
    }
}

/// Reference to a value: another variable's field, or a literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueRef {
    Var { var: String },
    Lit { lit: serde_json::Value },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub name: String,
    pub fields: Vec<FieldDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeDef {
    Receive {
        id: String,
        var: String,
    },
    Invoke {
        id: String,
        port: String,
        input: BTreeMap<String, ValueRef>,
        output_var: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parallel_group: Option<String>,
    },
    Decision {
        id: String,
        var: String,
        expr: String,
        #[serde(rename = "then")]
        then_branch: String,
        #[serde(rename = "else")]
        else_branch: String,
    },
    Reply {
        id: String,
        fields: BTreeMap<String, ValueRef>,
    },
}

impl NodeDef {
    pub fn id(&self) -> &str {
        match self {
            NodeDef::Receive { id, .. }
            | NodeDef::Invoke { id, .. }
            | NodeDef::Decision { id, .. }
            | NodeDef::Reply { id, .. } => id,
        }
    }
}

/// The declarative flow: variables, nodes and explicit edges. Decision
/// then/else branches are implicit extra edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDefinition {
    pub name: String,
    pub variables: Vec<VariableDecl>,
    pub nodes: Vec<NodeDef>,
    pub edges: Vec<(String, String)>,
    /// Schema of the reply message.
    pub reply_schema: MessageSchema,
}

impl ProcessDefinition {
    pub fn from_json(text: &str) -> Result<ProcessDefinition, ProcessError> {
        let definition: ProcessDefinition = serde_json::from_str(text)
            .map_err(|e| ProcessError::Validation(format!("bad JSON: {e}")))?;
        definition.validate()?;
        Ok(definition)
    }

    pub fn variable(&self, name: &str) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// All edges including decision branches.
    fn all_edges(&self) -> Vec<(String, String)> {
        let mut edges = self.edges.clone();
        for node in &self.nodes {
            if let NodeDef::Decision {
                id,
                then_branch,
                else_branch,
                ..
            } = node
            {
                edges.push((id.clone(), then_branch.clone()));
                edges.push((id.clone(), else_branch.clone()));
            }
        }
        edges
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        let ids: Vec<&str> = self.nodes.iter().map(|n| n.id()).collect();
        let id_set: BTreeSet<&str> = ids.iter().copied().collect();
        if id_set.len() != ids.len() {
            return Err(ProcessError::Validation("duplicate node ids".to_string()));
        }
        let receives = self
            .nodes
            .iter()
            .filter(|n| matches!(n, NodeDef::Receive { .. }))
            .count();
        if receives != 1 {
            return Err(ProcessError::Validation(format!(
                "exactly one receive required, found {receives}"
            )));
        }
        if !self.nodes.iter().any(|n| matches!(n, NodeDef::Reply { .. })) {
            return Err(ProcessError::Validation(
                "at least one reply required".to_string(),
            ));
        }
        let edges = self.all_edges();
        for (from, to) in &edges {
            if !id_set.contains(from.as_str()) || !id_set.contains(to.as_str()) {
                return Err(ProcessError::Validation(format!(
                    "edge references unknown node: {from} -> {to}"
                )));
            }
        }
        // DAG check via Kahn's algorithm.
        let mut indegree: BTreeMap<&str, usize> =
            ids.iter().map(|id| (*id, 0usize)).collect();
        for (_, to) in &edges {
            *indegree.get_mut(to.as_str()).expect("known node") += 1;
        }
        let mut queue: Vec<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut visited = 0;
        while let Some(id) = queue.pop() {
            visited += 1;
            for (from, to) in &edges {
                if from == id {
                    let d = indegree.get_mut(to.as_str()).expect("known node");
                    *d -= 1;
                    if *d == 0 {
                        queue.push(to.as_str());
                    }
                }
            }
        }
        if visited != ids.len() {
            return Err(ProcessError::Validation("edges form a cycle".to_string()));
        }
        // Variable references resolve and decisions typecheck.
        for node in &self.nodes {
            match node {
                NodeDef::Receive { var, .. } => {
                    self.variable(var).ok_or_else(|| {
                        ProcessError::Validation(format!("unknown variable `{var}`"))
                    })?;
                }
                NodeDef::Invoke {
                    input, output_var, ..
                } => {
                    self.variable(output_var).ok_or_else(|| {
                        ProcessError::Validation(format!("unknown variable `{output_var}`"))
                    })?;
                    for reference in input.values() {
                        self.check_value_ref(reference)?;
                    }
                }
                NodeDef::Decision { var, expr, .. } => {
                    let decl = self.variable(var).ok_or_else(|| {
                        ProcessError::Validation(format!("unknown variable `{var}`"))
                    })?;
                    FilterExpression::parse_with_fields(expr, &decl.fields)
                        .map_err(|e| ProcessError::Decision(e.to_string()))?;
                }
                NodeDef::Reply { fields, .. } => {
                    for reference in fields.values() {
                        self.check_value_ref(reference)?;
                    }
                }
            }
        }
        // Parallel-group independence: members must not consume each
        // other's outputs, nor be connected by any edge path.
        let mut groups: BTreeMap<&str, Vec<&NodeDef>> = BTreeMap::new();
        for node in &self.nodes {
            if let NodeDef::Invoke {
                parallel_group: Some(group),
                ..
            } = node
            {
                groups.entry(group.as_str()).or_default().push(node);
            }
        }
        for (group, members) in groups {
            let outputs: BTreeSet<&str> = members
                .iter()
                .filter_map(|n| match n {
                    NodeDef::Invoke { output_var, .. } => Some(output_var.as_str()),
                    _ => None,
                })
                .collect();
            for member in &members {
                if let NodeDef::Invoke { id, input, .. } = member {
                    for reference in input.values() {
                        if let ValueRef::Var { var } = reference {
                            let source = var.split('.').next().unwrap_or("");
                            if outputs.contains(source) {
                                return Err(ProcessError::Validation(format!(
                                    "parallel group `{group}`: `{id}` depends on a sibling's output"
                                )));
                            }
                        }
                    }
                }
            }
            for a in &members {
                for b in &members {
                    if a.id() != b.id() && self.path_exists(&edges, a.id(), b.id()) {
                        return Err(ProcessError::Validation(format!(
                            "parallel group `{group}`: `{}` precedes `{}`",
                            a.id(),
                            b.id()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_value_ref(&self, reference: &ValueRef) -> Result<(), ProcessError> {
        if let ValueRef::Var { var } = reference {
            let (variable, field) = var.split_once('.').ok_or_else(|| {
                ProcessError::Validation(format!(
                    "variable reference `{var}` must be `variable.field`"
                ))
            })?;
            let decl = self.variable(variable).ok_or_else(|| {
                ProcessError::Validation(format!("unknown variable `{variable}`"))
            })?;
            if !decl.fields.iter().any(|f| f.name == field) {
                return Err(ProcessError::Validation(format!(
                    "variable `{variable}` has no field `{field}`"
                )));
            }
        }
        Ok(())
    }

    fn path_exists(&self, edges: &[(String, String)], from: &str, to: &str) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if id == to {
                return true;
            }
            if !seen.insert(id) {
                continue;
            }
            for (a, b) in edges {
                if a == id {
                    stack.push(b);
                }
            }
        }
        false
    }
}

/// In-process or HTTP binding for one logical port.
#[derive(Clone)]
pub enum PortBinding {
    InProcess(Arc<dyn Fn(Message) -> Result<Message, String> + Send + Sync>),
    Http { url: String },
}

impl std::fmt::Debug for PortBinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PortBinding::InProcess(_) => f.write_str("InProcess"),
            PortBinding::Http { url } => write!(f, "Http({url})"),
        }
    }
}

/// A service operation's typed contract plus its binding.
#[derive(Debug, Clone)]
pub struct PortDescriptor {
    pub service: String,
    pub operation: String,
    pub input: MessageSchema,
    pub output: MessageSchema,
    pub binding: PortBinding,
}

#[derive(Debug, Clone, Default)]
pub struct PortRegistry {
    ports: BTreeMap<String, PortDescriptor>,
}

impl PortRegistry {
    pub fn new() -> Self {
        PortRegistry::default()
    }

    pub fn bind(&mut self, name: &str, descriptor: PortDescriptor) {
        self.ports.insert(name.to_string(), descriptor);
    }

    pub fn get(&self, name: &str) -> Option<&PortDescriptor> {
        self.ports.get(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Started,
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub node: String,
    pub kind: TraceKind,
    pub order: u64,
}

/// Execution record: every node start/completion in dispatch order.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    fn push(&mut self, node: &str, kind: TraceKind) {
        let order = self.events.len() as u64;
        self.events.push(TraceEvent {
            node: node.to_string(),
            kind,
            order,
        });
    }

    pub fn completed(&self, node: &str) -> bool {
        self.events
            .iter()
            .any(|e| e.node == node && e.kind == TraceKind::Completed)
    }
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub invoke_timeout_ms: u64,
    /// Artificial per-node latencies, for exercising completion orders.
    pub invoke_delays_ms: BTreeMap<String, u64>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            invoke_timeout_ms: 2_000,
            invoke_delays_ms: BTreeMap::new(),
        }
    }
}

/// Runs one process instance to its first reply.
pub fn run_process(
    definition: &ProcessDefinition,
    input: Message,
    ports: &PortRegistry,
    options: &EngineOptions,
) -> Result<(Message, Trace), ProcessError> {
    definition.validate()?;
    let edges = definition.all_edges();
    let mut trace = Trace::default();
    let mut done: BTreeSet<String> = BTreeSet::new();
    let mut skipped: BTreeSet<String> = BTreeSet::new();
    // Edges disabled by decisions choosing the other branch.
    let mut dead_edges: BTreeSet<(String, String)> = BTreeSet::new();
    let mut variables: BTreeMap<String, Message> = BTreeMap::new();

    // Receive starts the flow.
    let receive = definition
        .nodes
        .iter()
        .find_map(|n| match n {
            NodeDef::Receive { id, var } => Some((id.clone(), var.clone())),
            _ => None,
        })
        .expect("validated: one receive");
    let receive_schema = MessageSchema {
        fields: definition
            .variable(&receive.1)
            .expect("validated variable")
            .fields
            .clone(),
    };
    input.conforms(&receive_schema)?;
    trace.push(&receive.0, TraceKind::Started);
    variables.insert(receive.1.clone(), input);
    trace.push(&receive.0, TraceKind::Completed);
    done.insert(receive.0.clone());

    loop {
        // Propagate skips: a node all of whose live incoming edges
        // originate in skipped nodes can never run.
        loop {
            let mut changed = false;
            for node in &definition.nodes {
                let id = node.id();
                if done.contains(id) || skipped.contains(id) {
                    continue;
                }
                let incoming: Vec<&(String, String)> =
                    edges.iter().filter(|(_, to)| to == id).collect();
                if incoming.is_empty() {
                    continue; // the receive node
                }
                let alive = incoming.iter().any(|(from, to)| {
                    !dead_edges.contains(&(from.clone(), to.clone()))
                        && !skipped.contains(from.as_str())
                });
                if !alive {
                    skipped.insert(id.to_string());
                    trace.push(id, TraceKind::Skipped);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        // Runnable: all live incoming edges from done nodes.
        let runnable: Vec<&NodeDef> = definition
            .nodes
            .iter()
            .filter(|node| {
                let id = node.id();
                if done.contains(id) || skipped.contains(id) {
                    return false;
                }
                let incoming: Vec<&(String, String)> =
                    edges.iter().filter(|(_, to)| to == id).collect();
                if incoming.is_empty() {
                    return false;
                }
                incoming.iter().all(|(from, to)| {
                    dead_edges.contains(&(from.clone(), to.clone()))
                        || skipped.contains(from.as_str())
                        || done.contains(from.as_str())
                }) && incoming.iter().any(|(from, to)| {
                    !dead_edges.contains(&(from.clone(), to.clone()))
                        && done.contains(from.as_str())
                })
            })
            .collect();
        if runnable.is_empty() {
            return Err(ProcessError::Validation(
                "process stalled before reaching a reply".to_string(),
            ));
        }

        // Full parallel groups run together when every member is runnable.
        let mut batch: Vec<&NodeDef> = Vec::new();
        if let Some(first) = runnable.first() {
            if let NodeDef::Invoke {
                parallel_group: Some(group),
                ..
            } = first
            {
                let members: Vec<&NodeDef> = runnable
                    .iter()
                    .copied()
                    .filter(|n| {
                        matches!(n, NodeDef::Invoke { parallel_group: Some(g), .. } if g == group)
                    })
                    .collect();
                batch.extend(members);
            }
        }
        if batch.is_empty() {
            batch.push(runnable[0]);
        }

        match batch.as_slice() {
            [NodeDef::Receive { .. }] => unreachable!("receive already executed"),
            [NodeDef::Decision {
                id,
                var,
                expr,
                then_branch,
                else_branch,
            }] => {
                trace.push(id, TraceKind::Started);
                let decl = definition.variable(var).expect("validated");
                let message = variables.get(var).ok_or_else(|| {
                    ProcessError::Decision(format!("variable `{var}` not yet bound"))
                })?;
                let expression = FilterExpression::parse_with_fields(expr, &decl.fields)
                    .map_err(|e| ProcessError::Decision(e.to_string()))?;
                let ordered: Vec<FieldValue> = decl
                    .fields
                    .iter()
                    .map(|f| message.fields.get(&f.name).cloned().expect("conforming"))
                    .collect();
                let taken = expression.eval(&ordered);
                let (live, dead) = if taken {
                    (then_branch, else_branch)
                } else {
                    (else_branch, then_branch)
                };
                let _ = live;
                dead_edges.insert((id.clone(), dead.clone()));
                trace.push(id, TraceKind::Completed);
                done.insert(id.clone());
            }
            [NodeDef::Reply { id, fields }] => {
                trace.push(id, TraceKind::Started);
                let mut reply = Message::new();
                for (name, reference) in fields {
                    reply
                        .fields
                        .insert(name.clone(), resolve_ref(definition, &variables, reference)?);
                }
                reply.conforms(&definition.reply_schema)?;
                trace.push(id, TraceKind::Completed);
                return Ok((reply, trace));
            }
            invokes => {
                // One invoke or a whole parallel group: run concurrently,
                // join all before anything downstream.
                let mut jobs = Vec::new();
                for node in invokes {
                    let NodeDef::Invoke {
                        id,
                        port,
                        input,
                        output_var,
                        ..
                    } = node
                    else {
                        return Err(ProcessError::Validation(format!(
                            "node `{}` cannot run in an invoke batch",
                            node.id()
                        )));
                    };
                    let descriptor = ports
                        .get(port)
                        .ok_or_else(|| ProcessError::PortUnbound(port.clone()))?
                        .clone();
                    let mut request = Message::new();
                    for (name, reference) in input {
                        request
                            .fields
                            .insert(name.clone(), resolve_ref(definition, &variables, reference)?);
                    }
                    request.conforms(&descriptor.input)?;
                    trace.push(id, TraceKind::Started);
                    jobs.push((id.clone(), output_var.clone(), descriptor, request));
                }
                let results = run_invokes(jobs, options)?;
                for (id, output_var, descriptor, response) in results {
                    response.conforms(&descriptor.output)?;
                    variables.insert(output_var, response);
                    trace.push(&id, TraceKind::Completed);
                    done.insert(id);
                }
            }
        }
    }
}

fn resolve_ref(
    definition: &ProcessDefinition,
    variables: &BTreeMap<String, Message>,
    reference: &ValueRef,
) -> Result<FieldValue, ProcessError> {
    match reference {
        ValueRef::Var { var } => {
            let (variable, field) = var.split_once('.').expect("validated");
            let message = variables.get(variable).ok_or_else(|| {
                ProcessError::Validation(format!("variable `{variable}` not yet bound"))
            })?;
            message.fields.get(field).cloned().ok_or_else(|| {
                ProcessError::SchemaMismatch(format!("`{variable}` missing field `{field}`"))
            })
        }
        ValueRef::Lit { lit } => {
            let decl_kind = literal_kind(lit).ok_or_else(|| {
                ProcessError::Validation(format!("unsupported literal {lit}"))
            })?;
            let _ = definition;
            json_to_field(lit, decl_kind)
        }
    }
}

fn literal_kind(value: &serde_json::Value) -> Option<FieldKind> {
    match value {
        serde_json::Value::Bool(_) => Some(FieldKind::Bool),
        serde_json::Value::String(_) => Some(FieldKind::String),
        serde_json::Value::Number(n) if n.is_u64() => Some(FieldKind::U64),
        serde_json::Value::Number(n) if n.is_i64() => Some(FieldKind::I64),
        serde_json::Value::Number(_) => Some(FieldKind::F64),
        _ => None,
    }
}

type InvokeJob = (String, String, PortDescriptor, Message);
type InvokeDone = (String, String, PortDescriptor, Message);

/// Runs a batch of invokes on scoped threads and joins them all. Any
/// timeout or failure aborts the batch with that error (timeouts win so
/// callers can map them to a SERVICE_UNAVAILABLE denial).
fn run_invokes(
    jobs: Vec<InvokeJob>,
    options: &EngineOptions,
) -> Result<Vec<InvokeDone>, ProcessError> {
    let timeout = std::time::Duration::from_millis(options.invoke_timeout_ms);
    let mut results: Vec<Option<InvokeDone>> = (0..jobs.len()).map(|_| None).collect();
    let mut first_error: Option<ProcessError> = None;
    std::thread::scope(|scope| {
        let mut receivers = Vec::new();
        for (id, output_var, descriptor, request) in jobs {
            let (tx, rx) = mpsc::channel::<Result<Message, ProcessError>>();
            let delay = options.invoke_delays_ms.get(&id).copied().unwrap_or(0);
            let node_id = id.clone();
            let call_descriptor = descriptor.clone();
            scope.spawn(move || {
                if delay > 0 {
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
                let outcome = call_port(&node_id, &call_descriptor, request);
                let _ = tx.send(outcome);
            });
            receivers.push((id, output_var, descriptor, rx));
        }
        for (index, (id, output_var, descriptor, rx)) in receivers.into_iter().enumerate() {
            match rx.recv_timeout(timeout) {
                Ok(Ok(response)) => {
                    results[index] = Some((id, output_var, descriptor, response));
                }
                Ok(Err(e)) => {
                    if first_error.is_none() {
                        first_error = Some(e);
                    }
                }
                Err(_) => {
                    if first_error.is_none() {
                        first_error = Some(ProcessError::InvokeTimeout {
                            node: id,
                            timeout_ms: options.invoke_timeout_ms,
                        });
                    }
                }
            }
        }
    });
    if let Some(error) = first_error {
        return Err(error);
    }
    Ok(results.into_iter().map(|r| r.expect("set above")).collect())
}

fn call_port(
    node: &str,
    descriptor: &PortDescriptor,
    request: Message,
) -> Result<Message, ProcessError> {
    match &descriptor.binding {
        PortBinding::InProcess(handler) => {
            handler(request).map_err(|message| ProcessError::InvokeFailed {
                node: node.to_string(),
                message,
            })
        }
        PortBinding::Http { url } => {
            let response = crate::services::http::post_json(url, &request.to_json())
                .map_err(|e| ProcessError::Http(e))?;
            Message::from_json(&descriptor.output, &response)
        }
    }
}
